"""causalseq: multi-scale causal convolutional sequence models.

Plain and gated-residual multi-scale (U-shaped) networks plus a dilated
causal baseline, a clocked streaming inference engine that updates each
resolution level only when its clock fires, a small reverse-mode autodiff
core, a trainer, and a complexity profiler.
"""

from .autodiff import Parameter, StaleTapeError, Tape, Tensor, backward, grad_check
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "Parameter",
    "StaleTapeError",
    "Tape",
    "Tensor",
    "backward",
    "grad_check",
    "KERNEL_BACKEND",
    "__version__",
]
