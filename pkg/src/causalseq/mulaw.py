"""8-bit mu-law companding of [-1, 1] signals into 256 discrete codes.

Out-of-range samples are clamped; codes decode to companded bin centers,
so round-trip error is bounded by half a bin width mapped back through
the expansion.
"""

from __future__ import annotations

import numpy as np

MU = 255.0
LEVELS = 256


def mu_law_encode(x) -> np.ndarray:
    """Real samples in [-1, 1] -> integer codes in [0, 255].

    Rounding is half-away-from-zero on the [0, 255] scale, so 0.0 maps to
    code 128 and the endpoints map to 0 and 255 exactly."""
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    y = np.sign(x) * np.log1p(MU * np.abs(x)) / np.log(LEVELS)
    scaled = (y + 1.0) / 2.0 * MU
    return np.floor(scaled + 0.5).astype(np.int64)


def mu_law_decode(codes) -> np.ndarray:
    """Integer codes -> real samples at the companded bin centers."""
    c = np.asarray(codes, dtype=np.float64)
    y = (2.0 * c - MU) / MU
    return np.sign(y) * (np.power(LEVELS, np.abs(y)) - 1.0) / MU
