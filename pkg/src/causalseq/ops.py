"""Differentiable 1-D sequence operations.

Convolutions use the cross-correlation convention (no kernel flip) and
never zero-pad.  Every op computes eagerly, and records a backward
closure on the operands' tape when one is present; without a tape this
is plain numpy with no recording overhead.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .autodiff import Parameter, Tensor, tape_of
from .errors import (
    CropError,
    InsufficientInputError,
    TemporalMisalignmentError,
)


def conv1d_valid(x: Tensor, kernel: Parameter, bias: Parameter | None,
                 stride: int = 1, dilation: int = 1) -> Tensor:
    """Valid (no padding) cross-correlation; output frame t covers input
    frames [t*stride, t*stride + (W-1)*dilation]."""
    if stride < 1 or dilation < 1:
        raise ValueError("stride and dilation must be >= 1")
    width = kernel.data.shape[2]
    span = (width - 1) * dilation + 1
    if x.time < span:
        raise InsufficientInputError("insufficient input length for convolution", span)
    if kernel.data.shape[1] != x.channels:
        raise ValueError(
            f"kernel expects {kernel.data.shape[1]} input channels, got {x.channels}"
        )
    b = None if bias is None else bias.data
    y = kernels.conv1d_forward(x.data, kernel.data, b, stride, dilation)
    tape = tape_of(x, kernel, bias)
    out = Tensor(y, tape)
    if tape is not None:
        xd = x.data

        def bwd(g):
            x.accumulate_grad(kernels.conv1d_input_grad(g, kernel.data, stride, dilation, xd.shape[1]))
            kernel.accumulate_grad(kernels.conv1d_kernel_grad(g, xd, stride, dilation, width))
            if bias is not None:
                bias.accumulate_grad(g.sum(axis=1))

        tape.record(out, bwd)
    return out


def conv1d_transposed(x: Tensor, kernel: Parameter, bias: Parameter | None,
                      stride: int) -> Tensor:
    """Adjoint of the strided valid convolution, plus bias.
    Output length is (T-1)*stride + W."""
    if x.time < 1:
        raise InsufficientInputError("insufficient input length for transposed convolution", 1)
    if kernel.data.shape[1] != x.channels:
        raise ValueError(
            f"kernel expects {kernel.data.shape[1]} input channels, got {x.channels}"
        )
    b = None if bias is None else bias.data
    y = kernels.tconv1d_forward(x.data, kernel.data, b, stride)
    tape = tape_of(x, kernel, bias)
    out = Tensor(y, tape)
    if tape is not None:
        xd = x.data
        width = kernel.data.shape[2]

        def bwd(g):
            x.accumulate_grad(kernels.tconv1d_input_grad(g, kernel.data, stride))
            kernel.accumulate_grad(kernels.tconv1d_kernel_grad(g, xd, stride, width))
            if bias is not None:
                bias.accumulate_grad(g.sum(axis=1))

        tape.record(out, bwd)
    return out


def crop_front(x: Tensor, n: int) -> Tensor:
    """Drop the first n frames; gradient scatters into the surviving tail."""
    if n < 0:
        raise ValueError("crop size must be non-negative")
    if n > x.time:
        raise CropError(f"crop exceeds length ({n} > {x.time})")
    if n == 0:
        return x
    out = Tensor(x.data[:, n:], x.tape)
    if x.tape is not None:

        def bwd(g):
            full = np.zeros_like(x.data)
            full[:, n:] = g
            x.accumulate_grad(full)

        x.tape.record(out, bwd)
    return out


def crop_back(x: Tensor, n: int) -> Tensor:
    """Drop the last n frames (used to trim upsampling look-ahead)."""
    if n < 0:
        raise ValueError("crop size must be non-negative")
    if n > x.time:
        raise CropError(f"crop exceeds length ({n} > {x.time})")
    if n == 0:
        return x
    out = Tensor(x.data[:, : x.time - n], x.tape)
    if x.tape is not None:

        def bwd(g):
            full = np.zeros_like(x.data)
            full[:, : full.shape[1] - n] = g
            x.accumulate_grad(full)

        x.tape.record(out, bwd)
    return out


def decimate(x: Tensor, offset: int, step: int, count: int) -> Tensor:
    """Gather frames offset, offset+step, ... (count of them); the identity
    path of a strided layer, co-located with the strided conv's outputs."""
    last = offset + (count - 1) * step
    if offset < 0 or count < 0 or (count > 0 and last >= x.time):
        raise ValueError(f"decimation [{offset}::{step}]x{count} exceeds {x.time} frames")
    out = Tensor(np.ascontiguousarray(x.data[:, offset : last + 1 : step]), x.tape)
    if x.tape is not None:

        def bwd(g):
            full = np.zeros_like(x.data)
            full[:, offset : last + 1 : step] = g
            x.accumulate_grad(full)

        x.tape.record(out, bwd)
    return out


def repeat_frames(x: Tensor, k: int) -> Tensor:
    """Emit each frame k times in a row (the upsampling identity path)."""
    if k < 1:
        raise ValueError("repeat factor must be >= 1")
    out = Tensor(np.repeat(x.data, k, axis=1), x.tape)
    if x.tape is not None:

        def bwd(g):
            x.accumulate_grad(g.reshape(x.channels, x.time, k).sum(axis=2))

        x.tape.record(out, bwd)
    return out


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.time != b.time:
        raise TemporalMisalignmentError(
            f"temporal misalignment: {a.time} vs {b.time} frames"
        )
    out = Tensor(np.concatenate([a.data, b.data], axis=0), tape_of(a, b))
    if out.tape is not None:
        ca = a.channels

        def bwd(g):
            a.accumulate_grad(g[:ca])
            b.accumulate_grad(g[ca:])

        out.tape.record(out, bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch in add: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data, tape_of(a, b))
    if out.tape is not None:

        def bwd(g):
            a.accumulate_grad(g)
            b.accumulate_grad(g)

        out.tape.record(out, bwd)
    return out


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    y = np.where(x.data > 0, x.data, slope * x.data)
    out = Tensor(y, x.tape)
    if x.tape is not None:
        pos = x.data > 0

        def bwd(g):
            x.accumulate_grad(np.where(pos, g, slope * g))

        x.tape.record(out, bwd)
    return out


def tanh_act(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y, x.tape)
    if x.tape is not None:

        def bwd(g):
            x.accumulate_grad(g * (1 - y * y))

        x.tape.record(out, bwd)
    return out


def sigmoid_act(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    out = Tensor(y, x.tape)
    if x.tape is not None:

        def bwd(g):
            x.accumulate_grad(g * y * (1 - y))

        x.tape.record(out, bwd)
    return out


def gated_activation(a: Tensor, b: Tensor) -> Tensor:
    """tanh(a) * sigmoid(b), fused."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"gated_activation shape mismatch: {a.data.shape} vs {b.data.shape}")
    ta = np.tanh(a.data)
    sb = _sigmoid(b.data)
    out = Tensor(ta * sb, tape_of(a, b))
    if out.tape is not None:

        def bwd(g):
            a.accumulate_grad(g * sb * (1 - ta * ta))
            b.accumulate_grad(g * ta * sb * (1 - sb))

        out.tape.record(out, bwd)
    return out


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors scale by 1/(1-p) so eval is the identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an RNG")
    mask = (rng.random(x.data.shape) >= p).astype(x.dtype) / (1.0 - p)
    out = Tensor(x.data * mask, x.tape)
    if x.tape is not None:

        def bwd(g):
            x.accumulate_grad(g * mask)

        x.tape.record(out, bwd)
    return out


def extend_time_with_bias(x: Tensor, bias: Parameter, n: int) -> Tensor:
    """Append n frames holding just the bias vector.

    Covers the fine-time positions past the last upsampled frame when the
    filter is narrower than the stride (no kernel tap reaches them)."""
    if n == 0:
        return x
    cols = np.repeat(bias.data[:, None], n, axis=1)
    out = Tensor(np.concatenate([x.data, cols], axis=1), tape_of(x, bias))
    if out.tape is not None:
        t = x.time

        def bwd(g):
            x.accumulate_grad(g[:, :t])
            bias.accumulate_grad(g[:, t:].sum(axis=1))

        out.tape.record(out, bwd)
    return out


def embedding_lookup(table: Parameter, indices: np.ndarray, tape=None) -> Tensor:
    """(V, E) table + T indices -> (E, T) features."""
    idx = np.asarray(indices, dtype=np.int64)
    v = table.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise IndexError(f"embedding index out of range [0, {v})")
    tape = tape if tape is not None else table.tape
    out = Tensor(np.ascontiguousarray(table.data[idx].T), tape)
    if tape is not None:

        def bwd(g):
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g.T)
            table.accumulate_grad(gt)

        tape.record(out, bwd)
    return out


def tied_projection(features: Tensor, table: Parameter) -> Tensor:
    """(E, T) features -> (V, T) logits through the transposed embedding."""
    if features.channels != table.data.shape[1]:
        raise ValueError(
            f"features have {features.channels} channels, table embeds {table.data.shape[1]}"
        )
    out = Tensor(table.data @ features.data, tape_of(features, table))
    if out.tape is not None:
        fd = features.data

        def bwd(g):
            table.accumulate_grad(g @ fd.T)
            features.accumulate_grad(table.data.T @ g)

        out.tape.record(out, bwd)
    return out


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over frames of -log softmax(logits[:, t])[target_t], in nats."""
    tgt = np.asarray(targets, dtype=np.int64)
    if tgt.size == 0:
        raise ValueError("empty target sequence")
    if logits.time != tgt.size:
        raise ValueError(f"{logits.time} logit frames vs {tgt.size} targets")
    v = logits.channels
    if tgt.min() < 0 or tgt.max() >= v:
        raise IndexError(f"target out of range [0, {v})")
    z = logits.data - logits.data.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0))
    t_idx = np.arange(tgt.size)
    loss = float(np.mean(lse - z[tgt, t_idx]))
    out = Tensor(np.asarray(loss, dtype=logits.dtype), logits.tape)
    if logits.tape is not None:

        def bwd(g):
            p = np.exp(z - lse[None, :])
            p[tgt, t_idx] -= 1.0
            logits.accumulate_grad((float(g) / tgt.size) * p)

        logits.tape.record(out, bwd)
    return out


def binary_cross_entropy_sum(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-frame sum over channels of BCE(sigmoid(logit), target), averaged
    over frames; computed in logit space for stability."""
    tgt = np.asarray(targets, dtype=logits.dtype)
    if tgt.shape != logits.data.shape:
        raise ValueError(f"target shape {tgt.shape} != logits shape {logits.data.shape}")
    z = logits.data
    per_elem = np.maximum(z, 0) - z * tgt + np.log1p(np.exp(-np.abs(z)))
    loss = float(per_elem.sum(axis=0).mean())
    out = Tensor(np.asarray(loss, dtype=logits.dtype), logits.tape)
    if logits.tape is not None:
        t = logits.time

        def bwd(g):
            logits.accumulate_grad((float(g) / t) * (_sigmoid(z) - tgt))

        logits.tape.record(out, bwd)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
