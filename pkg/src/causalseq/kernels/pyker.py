"""Pure numpy implementations of the convolution kernels.

All functions operate on plain C-contiguous arrays; shapes follow the
package-wide convention: activations are [channels, time], convolution
kernels are [out_channels, in_channels, width], biases are [out_channels].
No autodiff lives here -- these are the raw forward/adjoint maps.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def _windows(x: np.ndarray, width: int, stride: int, dilation: int) -> np.ndarray:
    """Strided view (C, W, M) of all valid windows of x (C, T)."""
    c, t = x.shape
    span = (width - 1) * dilation + 1
    m = (t - span) // stride + 1
    sc, st = x.strides
    return np.lib.stride_tricks.as_strided(
        x, shape=(c, width, m), strides=(sc, st * dilation, st * stride), writeable=False
    )


def conv1d_forward(x, kernel, bias, stride=1, dilation=1):
    win = _windows(x, kernel.shape[2], stride, dilation)
    y = np.einsum("oiw,iwm->om", kernel, win, optimize=True)
    if bias is not None:
        y += bias[:, None]
    return np.ascontiguousarray(y)


def conv1d_input_grad(gy, kernel, stride, dilation, in_time):
    """Adjoint of conv1d_forward with respect to the input."""
    c_out, c_in, width = kernel.shape
    gx = np.zeros((c_in, in_time), dtype=gy.dtype)
    m = gy.shape[1]
    if m == 0:
        return gx
    # per-tap scatter: gx[:, t*stride + w*dilation] += K[:,:,w]^T @ gy[:, t]
    # (indices are distinct within one tap, so fancy += accumulates safely)
    contrib = np.einsum("oiw,om->iwm", kernel, gy, optimize=True)
    idx = np.arange(m) * stride
    for w in range(width):
        gx[:, idx + w * dilation] += contrib[:, w, :]
    return gx


def conv1d_kernel_grad(gy, x, stride, dilation, width):
    win = _windows(x, width, stride, dilation)
    return np.ascontiguousarray(np.einsum("om,iwm->oiw", gy, win, optimize=True))


def tconv1d_forward(x, kernel, bias, stride):
    c_out, c_in, width = kernel.shape
    t = x.shape[1]
    out_time = (t - 1) * stride + width
    y = np.zeros((c_out, out_time), dtype=x.dtype)
    taps = np.einsum("oiw,im->owm", kernel, x, optimize=True)
    idx = np.arange(t) * stride
    for w in range(width):
        y[:, idx + w] += taps[:, w, :]
    if bias is not None:
        y += bias[:, None]
    return y


def tconv1d_input_grad(gy, kernel, stride):
    """Adjoint of tconv1d_forward w.r.t. its input: a strided gather."""
    win = _windows(gy, kernel.shape[2], stride, 1)
    return np.ascontiguousarray(np.einsum("oiw,owm->im", kernel, win, optimize=True))


def tconv1d_kernel_grad(gy, x, stride, width):
    win = _windows(gy, width, stride, 1)
    return np.ascontiguousarray(np.einsum("owm,im->oiw", win, x, optimize=True))


def step_conv(window, kernel, bias):
    """One output frame from a full (C_in, W) window; used by streaming."""
    y = np.einsum("oiw,iw->o", kernel, window, optimize=True)
    if bias is not None:
        y = y + bias
    return y


def step_conv_dilated(history, kernel, bias, dilation):
    """One output frame from the last (W-1)*dilation+1 frames of `history`."""
    width = kernel.shape[2]
    window = history[:, ::dilation] if dilation > 1 else history
    assert window.shape[1] == width
    return step_conv(np.ascontiguousarray(window), kernel, bias)
