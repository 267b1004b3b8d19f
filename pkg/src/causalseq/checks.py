"""Finite-difference verification suite shared by tests and the CLI.

Every differentiable operation and every block kind is checked against
central finite differences on float64 shadow graphs.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autodiff import Parameter, Tape, Tensor, grad_check
from .models import ModelConfig, build_model


def _param(rng, shape, name):
    return Parameter(rng.standard_normal(shape), name)


def _x(rng, c, t, tape):
    return Tensor(rng.standard_normal((c, t)), tape)


def _scalarize(y: Tensor, rng) -> Tensor:
    """Project to a scalar through a fixed random weighting."""
    w = rng.standard_normal(y.data.shape)
    out = Tensor(np.asarray((y.data * w).sum()), y.tape)
    if y.tape is not None:
        y.tape.record(out, lambda g: y.accumulate_grad(float(g) * w))
    return out


def op_checks(rng: np.random.Generator):
    """Yields (name, build_loss, params) triples for grad_check."""
    def conv_case(stride, dilation=1):
        k = _param(rng, (3, 2, 3), "k")
        b = _param(rng, (3,), "b")
        x = rng.standard_normal((2, 17))

        def build():
            tape = Tape()
            y = ops.conv1d_valid(Tensor(x, tape), k, b, stride, dilation)
            return _scalarize(y, np.random.default_rng(7))

        return build, [k, b]

    def tconv_case(stride):
        k = _param(rng, (2, 3, 3), "k")
        b = _param(rng, (2,), "b")
        x = rng.standard_normal((3, 6))

        def build():
            tape = Tape()
            y = ops.conv1d_transposed(Tensor(x, tape), k, b, stride)
            return _scalarize(y, np.random.default_rng(8))

        return build, [k, b]

    def act_case(fn):
        k = _param(rng, (2, 2, 1), "k")
        x = rng.standard_normal((2, 9))

        def build():
            tape = Tape()
            h = ops.conv1d_valid(Tensor(x, tape), k, None, 1)
            return _scalarize(fn(h), np.random.default_rng(9))

        return build, [k]

    def gated_case():
        k1 = _param(rng, (2, 2, 3), "k1")
        k2 = _param(rng, (2, 2, 3), "k2")
        x = rng.standard_normal((2, 11))

        def build():
            tape = Tape()
            xt = Tensor(x, tape)
            return _scalarize(
                ops.gated_activation(ops.conv1d_valid(xt, k1, None, 1),
                                     ops.conv1d_valid(xt, k2, None, 1)),
                np.random.default_rng(10))

        return build, [k1, k2]

    def crop_concat_case():
        k = _param(rng, (2, 4, 2), "k")
        x = rng.standard_normal((2, 10))

        def build():
            tape = Tape()
            xt = Tensor(x, tape)
            a = ops.crop_front(xt, 3)
            b = ops.decimate(xt, 3, 1, 7)
            h = ops.conv1d_valid(ops.concat_channels(a, b), k, None, 1)
            return _scalarize(ops.repeat_frames(h, 2), np.random.default_rng(11))

        return build, [k]

    def embed_case():
        table = _param(rng, (7, 4), "table")
        idx = rng.integers(0, 7, size=9)
        tgt = np.random.default_rng(12).integers(0, 7, size=9)

        def build():
            tape = Tape()
            f = ops.embedding_lookup(table, idx, tape=tape)
            return ops.softmax_cross_entropy(ops.tied_projection(f, table), tgt)

        return build, [table]

    def bce_case():
        k = _param(rng, (3, 2, 2), "k")
        x = rng.standard_normal((2, 8))
        tgt = (np.random.default_rng(13).random((3, 7)) > 0.5).astype(float)

        def build():
            tape = Tape()
            logits = ops.conv1d_valid(Tensor(x, tape), k, None, 1)
            return ops.binary_cross_entropy_sum(logits, tgt)

        return build, [k]

    yield "conv1d_valid", *conv_case(1)
    yield "conv1d_strided", *conv_case(2)
    yield "conv1d_dilated", *conv_case(1, dilation=3)
    yield "conv1d_transposed", *tconv_case(2)
    yield "leaky_relu", *act_case(lambda h: ops.leaky_relu(h, 0.01))
    yield "tanh", *act_case(ops.tanh_act)
    yield "sigmoid", *act_case(ops.sigmoid_act)
    yield "gated_activation", *gated_case()
    yield "crop_concat_decimate_repeat", *crop_concat_case()
    yield "tied_embedding_softmax_ce", *embed_case()
    yield "binary_cross_entropy", *bce_case()


# one-level models exercising each block kind end to end; the residual
# ones are smooth (gates only), the others carry LeakyReLU kinks
BLOCK_CONFIGS = {
    "plain_block": dict(variant="plain", levels=1, width=3, stride=2, hidden=3),
    "plain_wide_stride": dict(variant="plain", levels=1, width=2, stride=3, hidden=3),
    "residual_block": dict(variant="residual", levels=1, width=3, stride=2,
                           features=3, depth=2),
    "residual_wide_stride": dict(variant="residual", levels=1, width=2, stride=3,
                                 features=3, depth=1),
    "baseline_block": dict(variant="dilated_baseline", levels=2, width=3,
                           stride=2, hidden=3),
}
KINK_MARGIN = 1e-3  # finite differences need a differentiable neighborhood


def _healthy_probe(graph, rng, tries: int = 64):
    """Random input whose pre-activations stay clear of the LeakyReLU kink
    (central differences are meaningless exactly at the kink)."""
    c_in, _ = graph.config.io_channels()
    t = graph.min_input_length() + 3
    for _ in range(tries):
        x = rng.standard_normal((c_in, t))
        ctx = graph._ctx(t, False, None, None, 0)
        ctx.preacts = []
        graph._run(ctx, graph.encode_input(x))
        if not ctx.preacts or min(ctx.preacts) > KINK_MARGIN:
            return x
    raise RuntimeError("no kink-free probe found; widen the margin")


def model_check(name: str, seed: int = 0) -> float:
    """Grad-check one block-level model (all parameters) in float64."""
    kw = dict(BLOCK_CONFIGS[name])
    kw.update(in_channels=2, out_channels=2, io_mode="linear", seed=seed)
    cfg = ModelConfig(**kw)
    graph = build_model(cfg, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    x = _healthy_probe(graph, rng)
    tgt = rng.integers(0, 2, size=graph.output_length(x.shape[1]))
    smooth = cfg.variant == "residual"

    def build():
        tape = Tape()
        out = graph.forward(x, tape=tape)
        return ops.softmax_cross_entropy(out.x, tgt)

    # smooth graphs tolerate a larger step, which dodges roundoff on the
    # smallest gate-attenuated gradients
    return grad_check(build, list(graph.params.values()),
                      eps=1e-4 if smooth else 1e-5)


def residual_us_block_check(seed: int = 0) -> float:
    """The upsampling + merge residual pair in isolation (smooth graph);
    held to the tighter 1e-6 bar."""
    from .models import ResidualLayer, Seq, _Ctx

    rng = np.random.default_rng(seed)
    f, w, k, t = 3, 3, 2, 17
    up = ResidualLayer("t.up", "up", f, f, w, k, 1)
    merge = ResidualLayer("t.merge", "merge", 2 * f, f, w, k, 1)
    params = []
    for unit in up.units() + merge.units():
        unit.kernel = Parameter(0.4 * rng.standard_normal((unit.c_out, unit.c_in, unit.width)),
                                unit.name + ".kernel")
        unit.bias = Parameter(0.1 * rng.standard_normal(unit.c_out), unit.name + ".bias")
        params += [unit.kernel, unit.bias]
    anchor = t - 1
    d_start = anchor % k
    deep_x = rng.standard_normal((f, (anchor - d_start) // k + 1))
    short_x = rng.standard_normal((f, t))
    weights = rng.standard_normal((f,))

    def build():
        tape = Tape()
        ctx = _Ctx(anchor=anchor, tape=tape)
        deep = Seq(d_start, k, deep_x.shape[1], Tensor(deep_x, tape))
        shortcut = Seq(0, 1, t, Tensor(short_x, tape))
        out = merge.run(ctx, up.run(ctx, deep), shortcut=shortcut)
        w_fixed = np.outer(weights, np.ones(out.n))
        loss = Tensor(np.asarray((out.x.data * w_fixed).sum()), tape)
        tape.record(loss, lambda g: out.x.accumulate_grad(float(g) * w_fixed))
        return loss

    return grad_check(build, params, eps=1e-4)


def run_gradcheck(seed: int = 0, instances: int = 1):
    """Full suite; returns list of (name, max_rel_err)."""
    results = []
    for i in range(instances):
        rng = np.random.default_rng(seed + i)
        for name, build, params in op_checks(rng):
            results.append((f"{name}[{i}]", grad_check(build, params)))
    for name in BLOCK_CONFIGS:
        results.append((name, model_check(name, seed)))
    results.append(("residual_us_block", residual_us_block_check(seed)))
    return results
