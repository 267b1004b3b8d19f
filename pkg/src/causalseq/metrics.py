"""Evaluation metrics: bits per character, word perplexity, frame-wise
perplexity.

Evaluation slides windows along the stream so every scoreable target is
scored exactly once with full model context; targets too close to the
start of a stream (not enough history to fill the receptive field, which
these models never zero-pad away) are excluded from the average.
"""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .errors import InsufficientInputError
from .models import ModelGraph

EVAL_BLOCK = 256


def _window_length(graph: ModelGraph, n_targets: int) -> int:
    """Smallest input length whose output covers n_targets frames."""
    t = graph.min_input_length() + n_targets - 1
    while graph.output_length(t) < n_targets:
        t += 1
    return t


def _score_chunks(graph: ModelGraph, n: int, block: int, score) -> tuple[float, int]:
    """Drive the sliding-window schedule; returns (nats total, targets).

    ``score(a, b, from_t)`` must evaluate inputs [a, b] and score targets
    [from_t, b+1], returning summed nats.  Targets before the first
    full-context output of the head window are skipped."""
    r = graph.min_input_length()
    if n < r + 1:
        return 0.0, 0
    win_full = _window_length(graph, block)
    total, count = 0.0, 0
    t0 = r
    while t0 < n:
        m = min(block, n - t0)
        b = t0 + m - 2  # last input needed to predict element t0 + m - 1
        win = win_full if m == block else _window_length(graph, m)
        a = max(0, b - win + 1)
        out_n = graph.output_length(b - a + 1)
        from_t = max(t0, b - out_n + 2)  # earliest target the window covers
        if from_t <= b + 1:
            total += score(a, b, from_t)
            count += b + 2 - from_t
        t0 += m
    return total, count


def mean_symbol_nats(graph: ModelGraph, ids: np.ndarray, block: int = EVAL_BLOCK) -> float:
    """Mean next-symbol cross-entropy (nats) over all full-context targets."""
    ids = np.asarray(ids, dtype=np.int64)

    def score(a, b, from_t):
        out = graph.forward(_encode_stream(graph, ids[a: b + 1]))
        first_abs = b - out.n + 1  # absolute position of the first output
        logits = ops.crop_front(out.x, (from_t - 1) - first_abs)
        targets = ids[from_t: b + 2]
        return float(ops.softmax_cross_entropy(logits, targets).data) * targets.size

    total, count = _score_chunks(graph, ids.size, block, score)
    if count == 0:
        raise InsufficientInputError("stream too short to score any target",
                                     graph.min_input_length() + 1)
    return total / count


def evaluate_bpc(graph: ModelGraph, ids: np.ndarray) -> float:
    """Bits per symbol: mean cross-entropy divided by ln 2."""
    return mean_symbol_nats(graph, ids) / math.log(2.0)


def evaluate_word_ppl(graph: ModelGraph, ids: np.ndarray) -> float:
    return math.exp(mean_symbol_nats(graph, ids))


def piece_frame_nats(graph: ModelGraph, piece: np.ndarray, block: int = EVAL_BLOCK):
    """(total summed-BCE nats, frames scored) for one [pitches, T] piece."""
    piece = np.asarray(piece, dtype=graph.dtype)

    def score(a, b, from_t):
        out = graph.forward(piece[:, a: b + 1])
        first_abs = b - out.n + 1
        logits = ops.crop_front(out.x, (from_t - 1) - first_abs)
        targets = piece[:, from_t: b + 2]
        return float(ops.binary_cross_entropy_sum(logits, targets).data) * targets.shape[1]

    return _score_chunks(graph, piece.shape[1], block, score)


def evaluate_frame_ppl(graph: ModelGraph, pieces) -> float:
    """exp of the mean per-frame summed pitch NLL over all scoreable frames."""
    total, count = 0.0, 0
    for piece in pieces:
        t, c = piece_frame_nats(graph, piece)
        total += t
        count += c
    if count == 0:
        raise InsufficientInputError("no piece long enough to score",
                                     graph.min_input_length() + 1)
    return math.exp(total / count)


def _encode_stream(graph: ModelGraph, ids: np.ndarray):
    """Symbol slice as model input (one-hot for linear io)."""
    cfg = graph.config
    if cfg.io_mode == "embedding_tied":
        return ids
    x = np.zeros((cfg.in_channels, ids.size), dtype=np.float32)
    x[ids, np.arange(ids.size)] = 1.0
    return x
