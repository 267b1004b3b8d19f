"""Tape mechanics, gradient correctness, and the tensor-level invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalseq import ops
from causalseq.autodiff import (Parameter, StaleTapeError, Tape, Tensor,
                                backward, grad_check)
from causalseq.checks import model_check, op_checks
from causalseq.kernels import get_backend


def test_linear_map_gradient_exact():
    w = Parameter(np.array([[[2.0]]]), "w")
    x = np.array([[1.0, -3.0, 4.0]])
    tape = Tape()
    y = ops.conv1d_valid(Tensor(x, tape), w, None, 1)
    loss = Tensor(np.asarray(y.data.sum()), tape)
    tape.record(loss, lambda g: y.accumulate_grad(np.full_like(y.data, float(g))))
    backward(loss)
    # d(sum(w*x))/dw = sum(x), exactly
    assert w.grad[0, 0, 0] == x.sum()


def test_crop_gradient_zero_outside():
    x = Tensor(np.arange(6, dtype=float).reshape(1, 6), Tape(), requires_grad=True)
    tape = x.tape
    y = ops.crop_front(x, 4)
    loss = Tensor(np.asarray(y.data.sum()), tape)
    tape.record(loss, lambda g: y.accumulate_grad(np.full_like(y.data, float(g))))
    backward(loss)
    assert x.grad.tolist() == [[0, 0, 0, 0, 1, 1]]


def test_stale_tape_rejected():
    w = Parameter(np.ones((1, 1, 1)), "w")
    tape = Tape()
    y = ops.conv1d_valid(Tensor(np.ones((1, 2)), tape), w, None, 1)
    loss = Tensor(np.asarray(y.data.sum()), tape)
    tape.record(loss, lambda g: y.accumulate_grad(np.full_like(y.data, float(g))))
    backward(loss)
    with pytest.raises(StaleTapeError):
        backward(loss)


def test_mixed_tapes_rejected():
    a = Tensor(np.ones((1, 3)), Tape())
    b = Tensor(np.ones((1, 3)), Tape())
    with pytest.raises(Exception, match="tape"):
        ops.add(a, b)


def test_grad_check_eps_bounds():
    with pytest.raises(ValueError):
        grad_check(lambda: None, [], eps=1e-2)


class TestGradCheckSuite:
    """Every differentiable op passes finite differences on >= 20
    random instances (64-bit), max relative error < 1e-5."""

    @pytest.mark.parametrize("seed", range(20))
    def test_all_ops_one_instance(self, seed):
        rng = np.random.default_rng(seed)
        for name, build, params in op_checks(rng):
            err = grad_check(build, params)
            assert err < 1e-5, f"{name} (seed {seed}): {err}"

    @pytest.mark.parametrize("name", ["plain_block", "residual_block",
                                      "residual_wide_stride", "baseline_block"])
    def test_full_blocks(self, name):
        for seed in range(3):
            err = model_check(name, seed)
            assert err < 1e-6, f"{name} seed {seed}: {err}"


class TestAdjointness:
    def test_conv_tconv_inner_product(self):
        # <conv(x), y> == <x, adjoint(y)> to 1e-10 in float64
        rng = np.random.default_rng(0)
        for trial in range(20):
            cin = int(rng.integers(1, 4))
            cout = int(rng.integers(1, 4))
            w = int(rng.integers(1, 5))
            s = int(rng.integers(1, 4))
            m = int(rng.integers(1, 8))
            n = (m - 1) * s + w  # exact cover: adjoint output matches input
            x = rng.standard_normal((cin, n))
            k = rng.standard_normal((cout, cin, w))
            y = rng.standard_normal((cout, m))
            lhs = float((ops.conv1d_valid(Tensor(x), Parameter(k, "k"), None, s).data * y).sum())
            ksw = np.ascontiguousarray(np.swapaxes(k, 0, 1))
            adj = ops.conv1d_transposed(Tensor(y), Parameter(ksw, "kt"), None, s)
            rhs = float((x * adj.data).sum())
            assert abs(lhs - rhs) < 1e-10


@settings(max_examples=60, deadline=None)
@given(t=st.integers(1, 60), w=st.integers(1, 7), k=st.integers(1, 4))
def test_shape_algebra_matches_runtime(t, w, k):
    """Composing the DS and US length formulas reproduces observed sizes."""
    if t < w:
        return
    x = np.zeros((1, t))
    down = ops.conv1d_valid(Tensor(x), Parameter(np.zeros((1, 1, w)), "k"), None, k)
    assert down.time == (t - w) // k + 1
    up = ops.conv1d_transposed(down, Parameter(np.zeros((1, 1, w)), "kt"), None, k)
    assert up.time == (down.time - 1) * k + w


def test_input_gradients_available():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 8)), Tape(),
               requires_grad=True)
    k = Parameter(np.random.default_rng(1).standard_normal((2, 2, 3)), "k")
    y = ops.conv1d_valid(x, k, None, 1)
    loss = ops.softmax_cross_entropy(y, np.zeros(6, dtype=int))
    backward(loss)
    assert x.grad is not None and np.any(x.grad != 0)


def test_backends_agree_on_gradients():
    rng = np.random.default_rng(0)
    py, cc = get_backend("python"), get_backend("compiled")
    x = rng.standard_normal((3, 25)).astype(np.float32)
    k = rng.standard_normal((4, 3, 5)).astype(np.float32)
    g = rng.standard_normal((4, 11)).astype(np.float32)
    np.testing.assert_allclose(py.conv1d_input_grad(g, k, 2, 1, 25),
                               cc.conv1d_input_grad(g, k, 2, 1, 25), atol=2e-5)
    np.testing.assert_allclose(py.conv1d_kernel_grad(g, x, 2, 1, 5),
                               cc.conv1d_kernel_grad(g, x, 2, 1, 5), atol=2e-5)
