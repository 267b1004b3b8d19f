"""Kernel backend selection.

Two interchangeable implementations of the convolution kernels exist: a
compiled Cython extension (``_ckernels``) and a pure numpy fallback
(``pyker``).  They trade places on opposite ends of the size spectrum:
BLAS-backed numpy wins on long batched sequences, the compiled loops win
on the tiny single-frame convolutions that dominate streaming
generation.  The default ("auto") therefore routes batch kernels to
numpy and per-step kernels to the extension when it is built.

Set ``CAUSALSEQ_KERNELS=python`` or ``=compiled`` to force one
implementation everywhere (``compiled`` raises if the extension is
missing); ``benchmarks/kernel_bench.py`` compares the two.
"""

from __future__ import annotations

import os

from . import pyker

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_choice = os.environ.get("CAUSALSEQ_KERNELS", "auto")

if _choice == "python":
    _batch, _step = pyker, pyker
elif _choice == "compiled":
    if _ckernels is None:
        raise ImportError("compiled kernels requested but the extension is not built")
    _batch, _step = _ckernels, _ckernels
elif _choice == "auto":
    _batch = pyker
    _step = _ckernels if _ckernels is not None else pyker
else:
    raise ValueError(f"unknown kernel backend {_choice!r} (use auto|compiled|python)")

BACKEND = "auto" if _choice == "auto" else _choice
STEP_BACKEND = _step.NAME

conv1d_forward = _batch.conv1d_forward
conv1d_input_grad = _batch.conv1d_input_grad
conv1d_kernel_grad = _batch.conv1d_kernel_grad
tconv1d_forward = _batch.tconv1d_forward
tconv1d_input_grad = _batch.tconv1d_input_grad
tconv1d_kernel_grad = _batch.tconv1d_kernel_grad
step_conv = _step.step_conv
step_conv_dilated = _step.step_conv_dilated


def get_backend(name: str):
    """A specific backend module, for side-by-side comparisons."""
    if name == "python":
        return pyker
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("the compiled extension is not built")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
