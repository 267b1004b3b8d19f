"""Reverse-mode automatic differentiation over [channels, time] arrays.

A ``Tape`` records every differentiable operation in execution order;
``backward`` replays it in exact reverse order, accumulating gradients
into ``.grad`` buffers.  Forward compute is float32 by default; gradient
checking builds float64 shadow graphs (see ``grad_check``).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class AutodiffError(RuntimeError):
    pass


class StaleTapeError(AutodiffError):
    """backward() was called twice without a fresh forward pass."""


class Tensor:
    """A value node.  Activations are (channels, time); parameters may be
    any rank (conv kernels are [out, in, width], biases [out])."""

    __slots__ = ("data", "grad", "tape", "requires_grad", "name")

    def __init__(self, data, tape=None, requires_grad=False, name=""):
        self.data = np.asarray(data)
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def time(self) -> int:
        return self.data.shape[1]

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"


class Parameter(Tensor):
    """A named trainable leaf; its grad buffer persists across tapes."""

    def __init__(self, data, name: str):
        super().__init__(np.ascontiguousarray(data), tape=None, requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of executed differentiable operations."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._consumed = False

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self._nodes.append((out, backward_fn))

    def __len__(self) -> int:
        return len(self._nodes)


def tape_of(*tensors: Tensor):
    """The common tape of the inputs (None when none is being traced)."""
    tape = None
    for t in tensors:
        if t is not None and t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise AutodiffError("operands recorded on different tapes")
            tape = t.tape
    return tape


def backward(loss: Tensor) -> None:
    """Propagate d(loss)=1 through the loss node's tape in reverse order."""
    tape = loss.tape
    if tape is None:
        raise AutodiffError("loss was not recorded on a tape")
    if tape._consumed:
        raise StaleTapeError("stale tape: backward() already ran; re-run the forward pass")
    loss.grad = np.ones_like(loss.data)
    for out, backward_fn in reversed(tape._nodes):
        if out.grad is not None:
            backward_fn(out.grad)
    tape._consumed = True


def grad_check(
    build_loss: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    ``build_loss`` must run a fresh forward pass over ``params`` (64-bit
    data is expected for meaningful tolerances) and return a scalar loss
    tensor.  Error metric per element:
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    for p in params:
        p.zero_grad()
    loss = build_loss()
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gnum = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = float(build_loss().data)
            flat[j] = orig - eps
            down = float(build_loss().data)
            flat[j] = orig
            gnum[j] = (up - down) / (2 * eps)
        gnum = gnum.reshape(p.data.shape)
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gnum)), 1e-8)
        worst = max(worst, float(np.max(np.abs(ga - gnum) / denom)))
    return worst
