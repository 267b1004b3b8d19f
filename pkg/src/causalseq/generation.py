"""Temperature sampling and autoregressive generation.

Generation runs on the streaming engine by default; ``naive=True`` replays
a full anchored forward per step instead.  Both paths consume the RNG
identically, so with a shared seed they emit the same symbols.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .models import ModelGraph
from .streaming import init_stream

ARGMAX_TEMPERATURE = 1e-6


def sample_with_temperature(logits, temperature: float, rng: np.random.Generator) -> int:
    """Draw one symbol from softmax(logits / temperature)."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits in sampler")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if temperature < ARGMAX_TEMPERATURE:
        return int(np.argmax(z))  # ties break to the lowest index
    z = z / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    u = rng.random()
    return int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, z.size - 1))


def sample_pitches(logits, temperature: float, rng: np.random.Generator) -> np.ndarray:
    """Independent per-pitch Bernoulli draws from sigmoid(logit / temperature)."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits in sampler")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    p = 1.0 / (1.0 + np.exp(-z / temperature))
    return (rng.random(p.shape) < p).astype(np.float64)


def frame_of_symbol(graph: ModelGraph, symbol: int):
    """The next-step input frame encoding a sampled symbol."""
    cfg = graph.config
    if cfg.io_mode == "embedding_tied":
        return int(symbol)
    if cfg.io_mode == "linear":
        frame = np.zeros(cfg.in_channels, dtype=graph.dtype)
        frame[int(symbol)] = 1.0
        return frame
    raise ValueError("pitch_logits generation emits frames, not symbols")


def generate(graph: ModelGraph, seed_context, n_steps: int, temperature: float,
             rng: np.random.Generator, naive: bool = False):
    """Continue ``seed_context`` by ``n_steps`` sampled steps.

    Returns the full sequence (seed plus continuation): a 1-D symbol array
    for embedding/linear io, a [pitches, T] array for pitch io."""
    cfg = graph.config
    pitch_mode = cfg.io_mode == "pitch_logits"
    if pitch_mode:
        history = np.array(seed_context, dtype=graph.dtype, copy=True)
        if history.ndim != 2:
            raise ValueError("pitch generation expects a [pitches, T] seed")
    else:
        history = np.array(seed_context, dtype=np.int64, copy=True)
        if history.ndim != 1:
            raise ValueError("symbol generation expects a 1-D symbol seed")
    if n_steps == 0:
        return history

    state = None
    if naive:
        logits = graph.forward(_model_input(cfg, history)).x.data[:, -1]
    else:
        state, logits = init_stream(graph, _model_input(cfg, history))

    for j in range(1, n_steps + 1):
        if pitch_mode:
            frame = sample_pitches(logits, temperature, rng)
            history = np.concatenate([history, frame[:, None].astype(history.dtype)], axis=1)
            next_in = frame.astype(graph.dtype)
        else:
            sym = sample_with_temperature(logits, temperature, rng)
            history = np.concatenate([history, [sym]])
            next_in = frame_of_symbol(graph, sym)
        if j == n_steps:
            break
        if naive:
            logits = graph.forward(_model_input(cfg, history), anchor_offset=j).x.data[:, -1]
        else:
            logits = state.step(next_in)
    return history


def _model_input(cfg, history):
    """History as the model's input form (one-hot expand linear symbol tasks)."""
    if cfg.io_mode == "linear" and history.ndim == 1:
        x = np.zeros((cfg.in_channels, history.size), dtype=np.float32)
        x[history.astype(np.int64), np.arange(history.size)] = 1.0
        return x
    return history
