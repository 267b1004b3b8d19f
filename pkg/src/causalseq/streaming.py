"""Clocked streaming inference.

Each resolution level carries a modular clock: level i recomputes only
every k^(i-1) emitted steps, strided convolutions emit a new coarse frame
every k-th firing, and upsampling paths serve the steps in between from
cached coarse frames.  Amortized work is sum(k^-(i-1)) level updates per
step (<= 2 for k=2).

``init_stream`` runs one anchored batch forward over the context to fill
every ring buffer; from then on ``step`` reproduces, frame for frame, the
last output column of a batch forward over the whole history with
``anchor_offset = steps_taken`` (up to float summation order).

The dilated baseline streams too (per-layer ring buffers, every layer
every step) so generation-speed comparisons are fair.
"""

from __future__ import annotations

import numpy as np

from . import kernels, ops
from .errors import InsufficientInputError
from .models import ConvUnit, ModelGraph, ResidualLayer


class _Win:
    """Circular input window for one convolution: O(1) pushes even for
    wide dilated look-backs."""

    __slots__ = ("buf", "kernel", "bias", "width", "span", "head", "taps")

    def __init__(self, unit: ConvUnit, tail: np.ndarray):
        span = (unit.width - 1) * unit.dilation + 1
        c = unit.c_in
        self.buf = np.zeros((c, span), dtype=unit.kernel.data.dtype)
        n = tail.shape[1]
        if n:
            self.buf[:, span - 1 - n: span - 1] = tail
        self.kernel = unit.kernel.data
        self.bias = unit.bias.data
        self.width = unit.width
        self.span = span
        self.head = span - 1  # next write slot
        # window taps relative to the newest frame: oldest first
        self.taps = np.arange(-(unit.width - 1) * unit.dilation, 1, unit.dilation)

    def push(self, frame: np.ndarray) -> None:
        self.buf[:, self.head] = frame
        self.head = (self.head + 1) % self.span

    def value(self) -> np.ndarray:
        idx = (self.head - 1 + self.taps) % self.span
        window = np.ascontiguousarray(self.buf[:, idx])
        return kernels.step_conv(window, self.kernel, self.bias)


class _GatedWin:
    """Shared rolling window feeding a tanh/sigmoid convolution pair."""

    __slots__ = ("buf", "k1", "b1", "k2", "b2")

    def __init__(self, layer: ResidualLayer, tail: np.ndarray):
        width = layer.width
        c = layer.c1.c_in
        self.buf = np.zeros((c, width), dtype=layer.c1.kernel.data.dtype)
        if tail.shape[1]:
            self.buf[:, width - tail.shape[1]:] = tail
        self.k1, self.b1 = layer.c1.kernel.data, layer.c1.bias.data
        self.k2, self.b2 = layer.c2.kernel.data, layer.c2.bias.data

    def push(self, frame: np.ndarray) -> None:
        self.buf[:, :-1] = self.buf[:, 1:]
        self.buf[:, -1] = frame

    def gated(self) -> np.ndarray:
        a = kernels.step_conv(self.buf, self.k1, self.b1)
        b = kernels.step_conv(self.buf, self.k2, self.b2)
        return np.tanh(a) * _sigmoid(b)


class _TconvCache:
    """Recent coarse frames driving an upsampling path on demand."""

    __slots__ = ("pos", "frames", "keep", "width", "fine_rate")

    def __init__(self, width: int, k: int, fine_rate: int, capture: dict):
        self.keep = (width - 1) // k + 1
        self.width = width
        self.fine_rate = fine_rate
        tail, end, rate = capture["tail"], capture["end"], capture["rate"]
        n = tail.shape[1]
        self.pos = [end - (n - 1 - i) * rate for i in range(n)]
        self.frames = [np.ascontiguousarray(tail[:, i]) for i in range(n)]

    def push(self, pos: int, frame: np.ndarray) -> None:
        self.pos.append(pos)
        self.frames.append(frame)
        if len(self.pos) > self.keep:
            del self.pos[0], self.frames[0]

    def taps(self, p: int, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
        y = bias.copy()
        for q, f in zip(self.pos, self.frames):
            w = (p - q) // self.fine_rate
            if 0 <= w < self.width:
                y += kernel[:, :, w] @ f
        return y

    def newest_at_or_before(self, p: int) -> np.ndarray:
        for q, f in zip(reversed(self.pos), reversed(self.frames)):
            if q <= p:
                return f
        raise RuntimeError("upsampling cache holds no frame at or before the query")


class _PlainLevel:
    __slots__ = ("inwin", "downwin", "tcache", "mergewin", "up_kernel", "up_bias", "shortcut")

    def __init__(self, ds_block, us_block, cap, k, level):
        self.inwin = _Win(ds_block.pre, cap[ds_block.pre.name]["tail"])
        self.downwin = _Win(ds_block.down, cap[ds_block.down.name]["tail"])
        self.tcache = _TconvCache(us_block.up.width, k, k ** (level - 1),
                                  cap[us_block.up.name])
        self.mergewin = _Win(us_block.merge, cap[us_block.merge.name]["tail"])
        self.up_kernel = us_block.up.kernel.data
        self.up_bias = us_block.up.bias.data
        self.shortcut: np.ndarray | None = None


class _ResLevel:
    __slots__ = ("ds", "downwin", "tcache", "up", "mergewin", "us", "shortcut")

    def __init__(self, ds_block, us_block, cap, k, level):
        self.ds = [_GatedWin(l, cap[l.name + ".c1"]["tail"]) for l in ds_block.layers]
        self.downwin = _GatedWin(ds_block.down, cap[ds_block.down.name + ".c1"]["tail"])
        self.tcache = _TconvCache(us_block.up.width, k, k ** (level - 1),
                                  cap[us_block.up.name + ".c1"])
        self.up = us_block.up
        self.mergewin = _GatedWin(us_block.merge, cap[us_block.merge.name]["tail"])
        self.us = [_GatedWin(l, cap[l.name + ".c1"]["tail"]) for l in us_block.layers]
        self.shortcut: np.ndarray | None = None


class _BaseBlockState:
    __slots__ = ("win1", "win2", "proj_kernel", "proj_bias", "slope")

    def __init__(self, block, cap):
        self.win1 = _Win(block.conv1, cap[block.conv1.name]["tail"])
        self.win2 = _Win(block.conv2, cap[block.conv2.name]["tail"])
        self.proj_kernel = None if block.proj is None else block.proj.kernel.data[:, :, 0]
        self.proj_bias = None if block.proj is None else block.proj.bias.data


class StreamState:
    """Single-owner, strictly sequential streaming state over a frozen graph."""

    def __init__(self, graph: ModelGraph, capture: dict, anchor: int):
        self.graph = graph
        cfg = graph.config
        self.k = graph.k
        self.L = graph.L
        self.slope = cfg.leaky_slope
        self.anchor = anchor
        self.pos = anchor
        self.steps = 0
        self.level_updates = np.zeros(max(self.L, 0), dtype=np.int64)
        self.variant = cfg.variant

        if cfg.variant == "dilated_baseline":
            self.base = [_BaseBlockState(b, capture) for b in graph.base_blocks]
        elif cfg.variant == "plain":
            us_by_level = {b.level: b for b in graph.us_blocks}
            self.levels = [
                _PlainLevel(ds, us_by_level[ds.level], capture, self.k, ds.level)
                for ds in graph.ds_blocks
            ]
            self.bneck = _Win(graph.bottleneck, capture[graph.bottleneck.name]["tail"])
        else:
            us_by_level = {b.level: b for b in graph.us_blocks}
            self.levels = [
                _ResLevel(ds, us_by_level[ds.level], capture, self.k, ds.level)
                for ds in graph.ds_blocks
            ]
            self.bneck = _GatedWin(graph.bottleneck,
                                   capture[graph.bottleneck.name + ".c1"]["tail"])

    # -- helpers ----------------------------------------------------------

    def _leaky(self, x: np.ndarray) -> np.ndarray:
        return np.where(x > 0, x, self.slope * x)

    def _encode(self, frame) -> np.ndarray:
        cfg = self.graph.config
        if cfg.io_mode == "embedding_tied":
            return np.ascontiguousarray(self.graph.embedding.data[int(frame)])
        f = np.asarray(frame, dtype=self.graph.dtype).reshape(-1)
        c_in, _ = cfg.io_channels()
        if f.shape[0] != c_in:
            raise ValueError(f"expected a {c_in}-channel frame, got {f.shape[0]}")
        return f

    def _project(self, y: np.ndarray) -> np.ndarray:
        g = self.graph
        if g.out_conv is not None:
            y = g.out_conv.kernel.data[:, :, 0] @ y + g.out_conv.bias.data
        if g.config.io_mode == "embedding_tied":
            y = g.embedding.data @ y
        return y

    # -- the step ----------------------------------------------------------

    def step(self, frame) -> np.ndarray:
        """Consume the next input frame, return the next logits column."""
        x = self._encode(frame)
        self.pos += 1
        self.steps += 1
        if self.variant == "dilated_baseline":
            return self._step_baseline(x)
        g = self.graph
        if g.stem is not None:
            x = g.stem.kernel.data[:, :, 0] @ x + g.stem.bias.data

        k, L = self.k, self.L
        j = self.pos - self.anchor
        fired = 0
        while fired < L and j % (k ** fired) == 0:
            fired += 1
        self.level_updates[:fired] += 1

        # downsampling pass
        carried = x
        for i in range(1, fired + 1):
            lvl = self.levels[i - 1]
            carried = self._ds(lvl, carried, emit=(j % (k ** i) == 0))
        if L == 0 or (fired == L and j % (k ** L) == 0):
            out = self._bottleneck(carried)
            if L:
                self.levels[L - 1].tcache.push(self.pos, out)
            else:
                return self._project(out)

        # upsampling pass, deepest fired level first
        y = None
        for i in range(fired, 0, -1):
            lvl = self.levels[i - 1]
            if y is not None:
                lvl.tcache.push(self.pos, y)
            y = self._us(lvl, self.pos)
        return self._project(y)

    def _ds(self, lvl, x, emit):
        if self.variant == "plain":
            lvl.inwin.push(x)
            shortcut = self._leaky(lvl.inwin.value())
            lvl.shortcut = shortcut
            lvl.downwin.push(shortcut)
            return self._leaky(lvl.downwin.value()) if emit else None
        for win in lvl.ds:
            win.push(x)
            x = x + win.gated()
        lvl.shortcut = x
        lvl.downwin.push(x)
        return (x + lvl.downwin.gated()) if emit else None

    def _bottleneck(self, x):
        self.bneck.push(x)
        if self.variant == "plain":
            return self._leaky(self.bneck.value())
        return x + self.bneck.gated()

    def _us(self, lvl, pos):
        if self.variant == "plain":
            up = self._leaky(lvl.tcache.taps(pos, lvl.up_kernel, lvl.up_bias))
            lvl.mergewin.push(np.concatenate([lvl.shortcut, up]))
            return self._leaky(lvl.mergewin.value())
        rep = lvl.tcache.newest_at_or_before(pos)
        g1 = lvl.tcache.taps(pos, lvl.up.c1.kernel.data, lvl.up.c1.bias.data)
        g2 = lvl.tcache.taps(pos, lvl.up.c2.kernel.data, lvl.up.c2.bias.data)
        up = rep + np.tanh(g1) * _sigmoid(g2)
        lvl.mergewin.push(np.concatenate([lvl.shortcut, up]))
        y = lvl.shortcut + lvl.mergewin.gated()
        for win in lvl.us:
            win.push(y)
            y = y + win.gated()
        return y

    def _step_baseline(self, x):
        self.level_updates += 1
        for blk in self.base:
            blk.win1.push(x)
            h = self._leaky(blk.win1.value())
            blk.win2.push(h)
            h = self._leaky(blk.win2.value())
            ident = x if blk.proj_kernel is None else blk.proj_kernel @ x + blk.proj_bias
            x = self._leaky(h + ident)
        return self._project(x)


def init_stream(graph: ModelGraph, context, training: bool = False):
    """Full anchored forward over the context, caching every layer's
    trailing state.  Returns (state, first_logits): first_logits is the
    last column of the batch forward (the prediction for the frame after
    the context)."""
    if training:
        raise ValueError("streaming runs in eval mode only (dropout must stay off)")
    n = len(context) if np.ndim(context) == 1 else np.asarray(context).shape[1]
    if n < graph.min_input_length():
        raise InsufficientInputError("context shorter than the model's minimum",
                                     graph.min_input_length())
    capture: dict = {}
    out = graph.forward(context, training=False, capture=capture)
    state = StreamState(graph, capture, anchor=n - 1)
    return state, out.x.data[:, -1].copy()


def step(state: StreamState, frame) -> np.ndarray:
    return state.step(frame)


def updates_performed(state: StreamState) -> np.ndarray:
    """Per-level update counts since init (level 1 first)."""
    return state.level_updates.copy()


def amortized_updates(state: StreamState) -> float:
    if state.steps == 0:
        raise ValueError("no steps taken yet")
    return float(state.level_updates.sum()) / state.steps


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
