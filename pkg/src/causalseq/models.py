"""Model graphs: plain and gated-residual multi-scale networks, plus the
dilated causal baseline.

Every intermediate sequence carries an absolute time frame of reference:
``Seq.start`` is the fine-time position of its first frame and ``Seq.rate``
the spacing between frames.  All strided convolutions align their window
ends to a shared *anchor* position (by default the last input frame), so
deeper levels compute on fixed clock grids.  This is what makes the
clocked streaming engine in ``streaming`` reproduce the batch forward
exactly: a step-j streaming output equals the last frame of a batch
forward over the whole history run with ``anchor_offset = j``.

Alignment contract: the output frame at position p is the prediction for
input frame p+1; no operation ever reads past position p to produce it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from . import ops
from .autodiff import Parameter, Tape, Tensor
from .errors import ConfigError, InsufficientInputError

VARIANTS = ("plain", "residual", "dilated_baseline")
IO_MODES = ("embedding_tied", "linear", "pitch_logits")


@dataclass
class ModelConfig:
    """Declarative architecture description.

    ``hidden`` sizes the plain/baseline convolutions; ``features`` and
    ``depth`` size the residual variant (depth D gives D+1 residual layers
    per block, one of them the up/down-sampling layer).
    """

    variant: str = "plain"
    levels: int = 1
    stride: int = 2
    width: int = 3
    hidden: int = 32
    features: int = 32
    depth: int = 0
    dropout: float = 0.0
    emb_dropout: float | None = None
    in_channels: int = 1
    out_channels: int = 1
    io_mode: str = "linear"
    vocab_size: int = 0
    embed_dim: int = 0
    pitches: int = 0
    leaky_slope: float = 0.01
    weight_norm: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.io_mode not in IO_MODES:
            raise ConfigError(f"unknown io_mode {self.io_mode!r}")
        if self.levels < 0:
            raise ConfigError("levels must be >= 0")
        if self.stride < 2:
            raise ConfigError("stride must be >= 2")
        if self.width < 1:
            raise ConfigError("width must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.variant == "residual":
            if self.features < 1:
                raise ConfigError("residual variant needs features >= 1")
            if self.depth < 0:
                raise ConfigError("depth must be >= 0")
        elif self.depth != 0:
            raise ConfigError(f"depth > 0 is only valid for the residual variant, not {self.variant!r}")
        if self.variant != "residual" and self.hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if self.io_mode == "embedding_tied":
            if self.vocab_size < 1 or self.embed_dim < 1:
                raise ConfigError("embedding_tied io needs vocab_size and embed_dim")
        elif self.io_mode == "pitch_logits":
            if self.pitches < 1:
                raise ConfigError("pitch_logits io needs pitches >= 1")
        else:
            if self.in_channels < 1 or self.out_channels < 1:
                raise ConfigError("linear io needs in_channels and out_channels")
        if self.weight_norm:
            raise ConfigError("weight_norm is not supported (flag reserved, keep it off)")

    def io_channels(self) -> tuple[int, int]:
        """(input channels into the conv stack, channels out of it)."""
        if self.io_mode == "embedding_tied":
            return self.embed_dim, self.embed_dim
        if self.io_mode == "pitch_logits":
            return self.pitches, self.pitches
        return self.in_channels, self.out_channels

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


# --------------------------------------------------------------------------
# sequences with an absolute time frame


@dataclass
class Seq:
    start: int
    rate: int
    n: int
    x: Tensor | None = None  # None while simulating shapes only

    @property
    def end(self) -> int:
        return self.start + (self.n - 1) * self.rate


@dataclass
class _Ctx:
    anchor: int
    training: bool = False
    rng: np.random.Generator | None = None
    tape: Tape | None = None
    dropout: float = 0.0
    slope: float = 0.01
    trace: list | None = None
    capture: dict | None = None
    preacts: list | None = None  # min |pre-activation| watch (gradcheck probes)


def _crop_front(s: Seq, c: int) -> Seq:
    if c == 0:
        return s
    if c > s.n:
        raise InsufficientInputError("sequence too short to phase-align", c)
    x = None if s.x is None else ops.crop_front(s.x, c)
    return Seq(s.start + c * s.rate, s.rate, s.n - c, x)


def _crop_back(s: Seq, c: int) -> Seq:
    if c == 0:
        return s
    x = None if s.x is None else ops.crop_back(s.x, c)
    return Seq(s.start, s.rate, s.n - c, x)


def _align(a: Seq, b: Seq) -> tuple[Seq, Seq]:
    """Crop both sequences to their common absolute time window."""
    assert a.rate == b.rate
    cs = max(a.start, b.start)
    ce = min(a.end, b.end)
    if ce < cs:
        raise InsufficientInputError("sequences share no time window", 1)
    a = _crop_back(_crop_front(a, (cs - a.start) // a.rate), (a.end - ce) // a.rate)
    b = _crop_back(_crop_front(b, (cs - b.start) // b.rate), (b.end - ce) // b.rate)
    return a, b


# --------------------------------------------------------------------------
# layer units


class ConvUnit:
    """One convolution (optionally strided/dilated/transposed) with its
    parameters and an optional LeakyReLU+Dropout tail."""

    def __init__(self, name, c_in, c_out, width, stride=1, dilation=1,
                 transposed=False, activated=False, tag=("conv", -1)):
        self.name = name
        self.c_in = c_in
        self.c_out = c_out
        self.width = width
        self.stride = stride
        self.dilation = dilation
        self.transposed = transposed
        self.activated = activated
        self.tag = tag  # (kind, level) for the profiler
        self.kernel: Parameter | None = None
        self.bias: Parameter | None = None

    def n_params(self) -> int:
        return self.c_out * self.c_in * self.width + self.c_out


def _post(ctx: _Ctx, unit: ConvUnit, s: Seq) -> Seq:
    if unit.activated and s.x is not None:
        if ctx.preacts is not None and s.x.data.size:
            ctx.preacts.append(float(np.abs(s.x.data).min()))
        x = ops.leaky_relu(s.x, ctx.slope)
        if ctx.training and ctx.dropout > 0:
            x = ops.dropout(x, ctx.dropout, True, ctx.rng)
        return replace(s, x=x)
    return s


def _capture_tail(ctx: _Ctx, key: str, s: Seq, keep: int) -> None:
    if ctx.capture is None or s.x is None:
        return
    keep = min(keep, s.n)
    tail = np.ascontiguousarray(s.x.data[:, s.n - keep:]) if keep else \
        np.zeros((s.x.channels, 0), dtype=s.x.data.dtype)
    ctx.capture[key] = {"tail": tail, "end": s.end, "rate": s.rate}


def _trace(ctx: _Ctx, unit: ConvUnit, out: Seq) -> None:
    if ctx.trace is not None:
        ctx.trace.append({
            "name": unit.name, "kind": unit.tag[0], "level": unit.tag[1],
            "rate": out.rate, "frames": out.n,
        })


def run_conv(ctx: _Ctx, unit: ConvUnit, s: Seq, capture_key: str | None = "",
             traced: bool = True) -> Seq:
    """Valid conv on a Seq.  Strided units first front-crop the input so
    window ends sit on the anchor's clock grid."""
    w, k, d = unit.width, unit.stride, unit.dilation
    if k > 1:
        first_end = s.start + (w - 1) * s.rate
        delta = ctx.anchor - first_end
        assert delta % s.rate == 0, "sequence left the anchor grid"
        s = _crop_front(s, (delta // s.rate) % k)
    span = (w - 1) * d + 1
    if s.n < span:
        raise InsufficientInputError(f"{unit.name}: insufficient input length", span)
    if capture_key is not None:
        _capture_tail(ctx, capture_key or unit.name, s, span - 1)
    out_n = (s.n - span) // k + 1
    out = Seq(s.start + (w - 1) * d * s.rate, s.rate * k, out_n,
              None if s.x is None else ops.conv1d_valid(s.x, unit.kernel, unit.bias, k, d))
    if traced:
        _trace(ctx, unit, out)
    return _post(ctx, unit, out)


def run_tconv(ctx: _Ctx, unit: ConvUnit, s: Seq, capture_key: str | None = "",
              traced: bool = True) -> Seq:
    """Transposed strided conv.  Output frame u sits at position
    start + u*(rate/k): the first tap of each coarse frame lands on that
    frame's own position, and the kernel extends (W-1) fine steps ahead of
    the last coarse frame (look-ahead that streaming consumes between
    coarse updates).  When W < k the remaining fine slots carry only the
    bias."""
    w, k = unit.width, unit.stride
    assert s.rate % k == 0
    if capture_key is not None:
        _capture_tail(ctx, capture_key or unit.name, s, (w - 1) // k + 1)
    ext = max(0, k - w)
    x = None
    if s.x is not None:
        x = ops.conv1d_transposed(s.x, unit.kernel, unit.bias, k)
        if ext:
            x = ops.extend_time_with_bias(x, unit.bias, ext)
    out = Seq(s.start, s.rate // k, (s.n - 1) * k + w + ext, x)
    if traced:
        _trace(ctx, unit, out)
    return _post(ctx, unit, out)


# --------------------------------------------------------------------------
# blocks


class PlainDS:
    def __init__(self, level, c_in, c, width, k):
        self.level = level
        self.pre = ConvUnit(f"block{level}.in_conv", c_in, c, width,
                            activated=True, tag=("ds_pre", level))
        self.down = ConvUnit(f"block{level}.down_conv", c, c, width, stride=k,
                             activated=True, tag=("ds_down", level))

    def units(self):
        return [self.pre, self.down]

    def run(self, ctx, s):
        shortcut = run_conv(ctx, self.pre, s)
        return shortcut, run_conv(ctx, self.down, shortcut)


class PlainUS:
    def __init__(self, level, c, width, k):
        self.level = level
        self.up = ConvUnit(f"block{level}.up_tconv", c, c, width, stride=k,
                           transposed=True, activated=True, tag=("us_up", level))
        self.merge = ConvUnit(f"block{level}.merge_conv", 2 * c, c, width,
                              activated=True, tag=("us_merge", level))

    def units(self):
        return [self.up, self.merge]

    def run(self, ctx, deep, shortcut):
        u = run_tconv(ctx, self.up, deep)
        sc, u = _align(shortcut, u)
        cat = Seq(sc.start, sc.rate, sc.n,
                  None if sc.x is None else ops.concat_channels(sc.x, u.x))
        _capture_tail(ctx, self.merge.name, cat, self.merge.width - 1)
        return run_conv(ctx, self.merge, cat, capture_key=None)


class ResidualLayer:
    """y = I(x) + tanh(C1(x)) * sigmoid(C2(x)); the identity path depends
    on the layer kind (crop / decimate / repeat / shortcut)."""

    def __init__(self, name, kind, c_in, c_out, width, k, level):
        self.name = name
        self.kind = kind  # normal | down | up | merge
        stride = k if kind in ("down", "up") else 1
        transposed = kind == "up"
        tag = ({"normal": "res_conv", "down": "res_down",
                "up": "res_up", "merge": "res_merge"}[kind], level)
        self.c1 = ConvUnit(name + ".c1", c_in, c_out, width, stride=stride,
                           transposed=transposed, tag=tag)
        self.c2 = ConvUnit(name + ".c2", c_in, c_out, width, stride=stride,
                           transposed=transposed, tag=tag)
        self.width = width
        self.k = k

    def units(self):
        return [self.c1, self.c2]

    def _gated(self, a: Seq, b: Seq) -> Seq:
        x = None if a.x is None else ops.gated_activation(a.x, b.x)
        return replace(a, x=x)

    def run(self, ctx, s, shortcut=None):
        w, k = self.width, self.k
        if self.kind == "normal":
            g = self._gated(run_conv(ctx, self.c1, s),
                            run_conv(ctx, self.c2, s, capture_key=None, traced=False))
            ident = _crop_front(s, w - 1)
            return _add(g, ident)
        if self.kind == "down":
            first_end = s.start + (w - 1) * s.rate
            s = _crop_front(s, ((ctx.anchor - first_end) // s.rate) % k)
            g = self._gated(run_conv(ctx, self.c1, s),
                            run_conv(ctx, self.c2, s, capture_key=None, traced=False))
            count = g.n
            ident_x = None if s.x is None else ops.decimate(s.x, w - 1, k, count)
            return _add(g, Seq(g.start, g.rate, count, ident_x))
        if self.kind == "up":
            g = self._gated(run_tconv(ctx, self.c1, s),
                             run_tconv(ctx, self.c2, s, capture_key=None, traced=False))
            rep_x = None if s.x is None else ops.repeat_frames(s.x, k)
            rep = Seq(s.start, s.rate // k, s.n * k, rep_x)
            g, rep = _align(g, rep)
            return _add(g, rep)
        # merge: identity is the shortcut; convs see concat(shortcut, upsampled)
        sc, up = _align(shortcut, s)
        cat = Seq(sc.start, sc.rate, sc.n,
                  None if sc.x is None else ops.concat_channels(sc.x, up.x))
        _capture_tail(ctx, self.name, cat, w - 1)
        g = self._gated(run_conv(ctx, self.c1, cat, capture_key=None),
                        run_conv(ctx, self.c2, cat, capture_key=None, traced=False))
        ident = _crop_front(sc, w - 1)
        return _add(g, ident)


def _add(a: Seq, b: Seq) -> Seq:
    assert a.start == b.start and a.rate == b.rate and a.n == b.n, \
        (a.start, b.start, a.rate, b.rate, a.n, b.n)
    return replace(a, x=None if a.x is None else ops.add(a.x, b.x))


class ResidualDS:
    def __init__(self, level, c, width, k, depth):
        self.level = level
        self.layers = [ResidualLayer(f"block{level}.ds{j}", "normal", c, c, width, k, level)
                       for j in range(1, depth + 1)]
        self.down = ResidualLayer(f"block{level}.down", "down", c, c, width, k, level)

    def units(self):
        return [u for l in self.layers for u in l.units()] + self.down.units()

    def run(self, ctx, s):
        for layer in self.layers:
            s = layer.run(ctx, s)
        return s, self.down.run(ctx, s)


class ResidualUS:
    def __init__(self, level, c, width, k, depth):
        self.level = level
        self.up = ResidualLayer(f"block{level}.up", "up", c, c, width, k, level)
        self.merge = ResidualLayer(f"block{level}.merge", "merge", 2 * c, c, width, k, level)
        self.layers = [ResidualLayer(f"block{level}.us{j}", "normal", c, c, width, k, level)
                       for j in range(1, depth)]

    def units(self):
        return self.up.units() + self.merge.units() + [u for l in self.layers for u in l.units()]

    def run(self, ctx, deep, shortcut):
        u = self.up.run(ctx, deep)
        s = self.merge.run(ctx, u, shortcut=shortcut)
        for layer in self.layers:
            s = layer.run(ctx, s)
        return s


class BaselineBlock:
    """Two dilated causal convs + identity (1x1 conv on channel change),
    LeakyReLU after the residual sum."""

    def __init__(self, level, c_in, c_out, width, dilation):
        self.level = level
        self.dilation = dilation
        self.conv1 = ConvUnit(f"block{level}.conv1", c_in, c_out, width,
                              dilation=dilation, activated=True, tag=("base_conv", level))
        self.conv2 = ConvUnit(f"block{level}.conv2", c_out, c_out, width,
                              dilation=dilation, activated=True, tag=("base_conv", level))
        self.proj = None
        if c_in != c_out:
            self.proj = ConvUnit(f"block{level}.proj", c_in, c_out, 1, tag=("base_proj", level))

    def units(self):
        us = [self.conv1, self.conv2]
        if self.proj is not None:
            us.append(self.proj)
        return us

    def run(self, ctx, s):
        h = run_conv(ctx, self.conv2, run_conv(ctx, self.conv1, s, traced=False))
        ident = s if self.proj is None else run_conv(ctx, self.proj, s, traced=False)
        ident = _crop_front(ident, (h.start - ident.start) // ident.rate)
        out = _add(h, ident)
        if out.x is not None:
            if ctx.preacts is not None and out.x.data.size:
                ctx.preacts.append(float(np.abs(out.x.data).min()))
            out = replace(out, x=ops.leaky_relu(out.x, ctx.slope))
        return out


class ModelGraph:
    """A built, wired network with a named parameter registry."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype)
        self.k = config.stride
        self.L = config.levels
        self.params: dict[str, Parameter] = {}
        self.embedding: Parameter | None = None
        self._build()
        self._min_input_length: int | None = None

    # -- construction ------------------------------------------------------

    def _build(self) -> None:
        cfg = self.config
        c_in, c_out = cfg.io_channels()
        k, w, L = cfg.stride, cfg.width, cfg.levels
        self.ds_blocks: list = []
        self.us_blocks: list = []
        self.base_blocks: list = []
        self.stem: ConvUnit | None = None
        self.out_conv: ConvUnit | None = None

        if cfg.variant == "plain":
            c = cfg.hidden
            for i in range(1, L + 1):
                self.ds_blocks.append(PlainDS(i, c_in if i == 1 else c, c, w, k))
            first = c if L else c_in
            self.bottleneck = ConvUnit("bottleneck.conv", first, c, w,
                                       activated=True, tag=("bottleneck", 0))
            for i in range(L, 0, -1):
                self.us_blocks.append(PlainUS(i, c, w, k))
            self.out_conv = ConvUnit("head.out_conv", c, c_out, 1, tag=("head", -1))
        elif cfg.variant == "residual":
            f = cfg.features
            self.stem = ConvUnit("head.in_conv", c_in, f, 1, tag=("head", -1))
            for i in range(1, L + 1):
                self.ds_blocks.append(ResidualDS(i, f, w, k, cfg.depth))
            self.bottleneck = ResidualLayer("bottleneck.res", "normal", f, f, w, k, 0)
            for i in range(L, 0, -1):
                self.us_blocks.append(ResidualUS(i, f, w, k, cfg.depth))
            self.out_conv = ConvUnit("head.out_conv", f, c_out, 1, tag=("head", -1))
        else:
            c = cfg.hidden
            if L < 1:
                raise ConfigError("dilated_baseline needs levels >= 1")
            last = c_out if cfg.io_mode == "embedding_tied" else c
            for i in range(1, L + 1):
                ci = c_in if i == 1 else c
                co = last if i == L else c
                self.base_blocks.append(BaselineBlock(i, ci, co, w, k ** (i - 1)))
            self.bottleneck = None
            if cfg.io_mode != "embedding_tied":
                self.out_conv = ConvUnit("head.out_conv", last, c_out, 1, tag=("head", -1))

        rng = np.random.default_rng(cfg.seed)
        if cfg.io_mode == "embedding_tied":
            bound = np.sqrt(3.0 / cfg.embed_dim)
            table = rng.uniform(-bound, bound, size=(cfg.vocab_size, cfg.embed_dim))
            self.embedding = Parameter(table.astype(self.dtype), "head.embedding.table")
            self.params[self.embedding.name] = self.embedding
        for unit in self._units():
            self._init_unit(unit, rng)

    def _units(self) -> Iterable[ConvUnit]:
        for blk in self.ds_blocks:
            yield from blk.units()
        if self.bottleneck is not None:
            if isinstance(self.bottleneck, ConvUnit):
                yield self.bottleneck
            else:
                yield from self.bottleneck.units()
        for blk in self.us_blocks:
            yield from blk.units()
        for blk in self.base_blocks:
            yield from blk.units()
        if self.stem is not None:
            yield self.stem
        if self.out_conv is not None:
            yield self.out_conv

    def _init_unit(self, unit: ConvUnit, rng: np.random.Generator) -> None:
        fan_in = unit.c_in * unit.width
        gain = np.sqrt(2.0 / (1.0 + self.config.leaky_slope ** 2)) if unit.activated else 1.0
        bound = gain * np.sqrt(3.0 / fan_in)
        kern = rng.uniform(-bound, bound, size=(unit.c_out, unit.c_in, unit.width))
        unit.kernel = Parameter(kern.astype(self.dtype), unit.name + ".kernel")
        unit.bias = Parameter(np.zeros(unit.c_out, dtype=self.dtype), unit.name + ".bias")
        self.params[unit.kernel.name] = unit.kernel
        self.params[unit.bias.name] = unit.bias

    # -- forward -----------------------------------------------------------

    def encode_input(self, data, tape=None, requires_grad=False) -> Seq:
        """Wrap raw input (indices or a [C, T] array) as a rate-1 Seq."""
        cfg = self.config
        if cfg.io_mode == "embedding_tied":
            idx = np.asarray(data)
            if idx.ndim != 1:
                raise ValueError("embedding_tied input must be a 1-D index sequence")
            x = ops.embedding_lookup(self.embedding, idx, tape=tape)
            return Seq(0, 1, idx.size, x)
        arr = np.asarray(data, dtype=self.dtype)
        if arr.ndim != 2:
            raise ValueError("input must be [channels, time]")
        c_in, _ = cfg.io_channels()
        if arr.shape[0] != c_in:
            raise ValueError(f"expected {c_in} input channels, got {arr.shape[0]}")
        return Seq(0, 1, arr.shape[1], Tensor(arr, tape, requires_grad=requires_grad))

    def forward(self, data, training=False, rng=None, tape=None, anchor_offset=0,
                trace=None, capture=None, input_requires_grad=False) -> Seq:
        """Run the network; returns the logits Seq (rate 1, ends at the
        last input frame).  ``anchor_offset`` moves the clock anchor j
        steps before the last frame (streaming equivalence checks)."""
        s = self.encode_input(data, tape=tape, requires_grad=input_requires_grad)
        if s.n < self.min_input_length():
            raise InsufficientInputError("input shorter than the model's minimum",
                                         self.min_input_length())
        ctx = self._ctx(s.n, training, rng, tape, anchor_offset, trace, capture)
        return self._run(ctx, s)

    def _ctx(self, T, training, rng, tape, anchor_offset, trace=None, capture=None) -> _Ctx:
        cfg = self.config
        modulus = self.k ** self.L if self.L else 1
        anchor = (T - 1) - (anchor_offset % modulus)
        return _Ctx(anchor=anchor, training=training, rng=rng, tape=tape,
                    dropout=cfg.dropout, slope=cfg.leaky_slope,
                    trace=trace, capture=capture)

    def _run(self, ctx: _Ctx, s: Seq) -> Seq:
        cfg = self.config
        if cfg.variant == "dilated_baseline":
            if s.x is not None and cfg.io_mode == "embedding_tied":
                s = self._embed_dropout(ctx, s)
            for blk in self.base_blocks:
                s = blk.run(ctx, s)
            return self._project(ctx, s)
        if s.x is not None and cfg.io_mode == "embedding_tied":
            s = self._embed_dropout(ctx, s)
        if self.stem is not None:
            s = run_conv(ctx, self.stem, s, capture_key=None, traced=False)
        shortcuts = []
        for blk in self.ds_blocks:
            shortcut, s = blk.run(ctx, s)
            shortcuts.append(shortcut)
        if isinstance(self.bottleneck, ConvUnit):
            s = run_conv(ctx, self.bottleneck, s)
        else:
            s = self.bottleneck.run(ctx, s)
        for blk in self.us_blocks:
            s = blk.run(ctx, s, shortcuts[blk.level - 1])
        return self._project(ctx, s)

    def _embed_dropout(self, ctx: _Ctx, s: Seq) -> Seq:
        p = self.config.emb_dropout
        p = self.config.dropout if p is None else p
        if ctx.training and p > 0 and s.x is not None:
            return replace(s, x=ops.dropout(s.x, p, True, ctx.rng))
        return s

    def _project(self, ctx: _Ctx, s: Seq) -> Seq:
        if self.out_conv is not None:
            s = run_conv(ctx, self.out_conv, s, capture_key=None, traced=False)
        if self.config.io_mode == "embedding_tied" and s.x is not None:
            s = replace(s, x=ops.tied_projection(s.x, self.embedding))
        return s

    # -- shape algebra -----------------------------------------------------

    def simulate(self, T: int, anchor_offset: int = 0) -> Seq:
        """Schedule-only forward: same crop arithmetic, no arrays."""
        ctx = self._ctx(T, False, None, None, anchor_offset)
        return self._run(ctx, Seq(0, 1, T, None))

    def output_length(self, T: int, anchor_offset: int = 0) -> int:
        return self.simulate(T, anchor_offset).n

    def min_input_length(self) -> int:
        """Smallest T for which every intermediate sequence is non-empty."""
        if self._min_input_length is None:
            self._min_input_length = self._scan_min_input()
        return self._min_input_length

    def _feasible(self, T: int) -> bool:
        try:
            return self.simulate(T).n >= 1
        except InsufficientInputError:
            return False

    def _scan_min_input(self) -> int:
        hi = 1
        while not self._feasible(hi):
            hi *= 2
            if hi > 1 << 26:
                raise ConfigError("model never produces output (bad config?)")
        lo = hi // 2  # feasibility is monotone in T (more history, same grid)
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if self._feasible(mid):
                hi = mid
            else:
                lo = mid
        return hi

    def count_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def build_model(config: ModelConfig, dtype=np.float32) -> ModelGraph:
    return ModelGraph(config, dtype=dtype)


def count_parameters(graph: ModelGraph) -> int:
    return graph.count_parameters()


def min_input_length(graph: ModelGraph) -> int:
    return graph.min_input_length()


# --------------------------------------------------------------------------
# receptive field


def receptive_field_analytic(config: ModelConfig) -> int:
    """Width of the last output frame's full-context dependency cone
    (end-anchored): the trailing-frame demand of one output, propagated
    backwards through every layer."""
    config.validate()
    w, k, L = config.width, config.stride, config.levels

    if config.variant == "dilated_baseline":
        return 1 + sum(2 * (w - 1) * k ** (i - 1) for i in range(1, L + 1))

    def tconv_demand(n: int) -> int:
        # n trailing fine frames need coarse frames covering (W-1) fine
        # steps below the deepest one; bias-only frames demand nothing
        return (n + w - 2) // k + 1

    def rep_demand(n: int) -> int:
        # the repetition identity reads the latest coarse frame at or
        # before each position: ceil((n-1)/k) + 1 coarse frames
        return (n - 2) // k + 2

    depth = config.depth if config.variant == "residual" else 0
    n = 1  # head convs have width 1
    shortcut_demand = []
    for _ in range(L):  # walk up the US stack from the output (level 1 first)
        if config.variant == "plain":
            c = n + w - 1          # merge conv input
            shortcut_demand.append(c)
            n = tconv_demand(c)
        else:
            n += (depth - 1 if depth >= 1 else 0) * (w - 1)  # trailing normal layers
            c = n + w - 1          # merge layer conv input
            shortcut_demand.append(c)
            n = max(tconv_demand(c), rep_demand(c))
    # bottleneck
    n = n + w - 1
    # down the DS stack
    for i in range(L, 0, -1):
        n = (n - 1) * k + w                       # strided conv input
        n = max(n, shortcut_demand[i - 1])        # same tensor feeds the shortcut
        n += (w - 1) * (depth if config.variant == "residual" else 1)
    return n


def receptive_field(graph: ModelGraph) -> int:
    """Empirical receptive field (perturbation oracle)."""
    return receptive_field_empirical(graph)


def receptive_field_empirical(graph: ModelGraph, margin: int = 8,
                              rng: np.random.Generator | None = None) -> int:
    """Perturbation oracle: smallest R such that no input frame more than
    R-1 steps before the end can change the final output frame.

    The influenced set can have interior holes (filter narrower than the
    stride), so this scans from the front for the deepest influencing
    frame; frames beyond the cone never influence, which keeps the scan
    short when the analytic value is correct.  Runs a float64 twin so
    cone-edge changes survive rounding."""
    rng = rng or np.random.default_rng(0)
    if graph.dtype != np.float64:
        graph = ModelGraph(graph.config, dtype=np.float64)
    analytic = receptive_field_analytic(graph.config)
    T = max(graph.min_input_length(), analytic) + margin
    x = _probe_input(graph, T, rng)
    base = graph.forward(x).x.data[:, -1].copy()

    def changes(t: int) -> bool:
        out = graph.forward(_perturb(graph, x, t)).x.data[:, -1]
        return bool(np.any(out != base))

    for t in range(T):
        if changes(t):
            return T - t
    raise AssertionError("no input frame influences the output")


def _probe_input(graph: ModelGraph, T: int, rng: np.random.Generator):
    cfg = graph.config
    if cfg.io_mode == "embedding_tied":
        return rng.integers(0, cfg.vocab_size, size=T)
    c_in, _ = cfg.io_channels()
    return rng.standard_normal((c_in, T)).astype(graph.dtype)


def _perturb(graph: ModelGraph, x, t: int):
    cfg = graph.config
    if cfg.io_mode == "embedding_tied":
        xp = x.copy()
        xp[t] = (xp[t] + 1) % cfg.vocab_size
        return xp
    xp = x.copy()
    xp[:, t] += 1.0
    return xp
