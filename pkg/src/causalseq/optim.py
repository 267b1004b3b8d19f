"""Adam with optional gradient clipping, and the plateau LR schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter
from .errors import NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, Parameter]) -> "AdamState":
        st = cls()
        for name, p in params.items():
            st.m[name] = np.zeros_like(p.data)
            st.v[name] = np.zeros_like(p.data)
        return st


def clip_gradients(params: dict[str, Parameter], clip: float, mode: str = "norm") -> float:
    """Scale (or clamp) gradients in place; returns the pre-clip global norm."""
    total = 0.0
    for p in params.values():
        total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if mode == "norm":
        if norm > clip:
            scale = clip / norm
            for p in params.values():
                p.grad *= scale
    elif mode == "value":
        for p in params.values():
            np.clip(p.grad, -clip, clip, out=p.grad)
    else:
        raise ValueError(f"unknown clip mode {mode!r}")
    return norm


def adam_step(params: dict[str, Parameter], state: AdamState, lr: float,
              clip: float | None = None, clip_mode: str = "norm") -> None:
    """One Adam update from the gradients currently held by the parameters."""
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in parameter {name!r}")
    if clip is not None:
        if clip <= 0:
            raise ValueError("clip magnitude must be positive")
        clip_gradients(params, clip, clip_mode)
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name, p in params.items():
        g = p.grad
        m, v = state.m[name], state.v[name]
        m += (1.0 - ADAM_BETA1) * (g - m)
        v += (1.0 - ADAM_BETA2) * (g * g - v)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


@dataclass
class PlateauSchedule:
    """Halve the LR when validation stalls for `patience` epochs, but only
    once more than 10 epochs have passed; the stall counter resets on each
    halving.  Lower metric is better."""

    lr: float
    patience: int
    warmup_epochs: int = 10
    best: float = float("inf")
    stall: int = 0
    halvings: int = 0

    def on_epoch_end(self, val_metric: float, epoch: int) -> float:
        if val_metric < self.best:
            self.best = val_metric
            self.stall = 0
        else:
            self.stall += 1
        if self.stall >= self.patience and epoch > self.warmup_epochs:
            self.lr *= 0.5
            self.halvings += 1
            self.stall = 0
        return self.lr


def lr_on_epoch_end(sched: PlateauSchedule, val_metric: float, epoch: int) -> float:
    return sched.on_epoch_end(val_metric, epoch)
