"""Binary checkpoint format.

Layout (all integers little-endian):

    magic  b"SUNW"
    u16    format version (currently 1)
    u32    config length, then canonical JSON of the ModelConfig
    u32    parameter count, then per parameter:
               u16 name length, name (utf-8)
               u8  ndim, u32 * ndim dims
               raw little-endian float32 data
    u8     optimizer-present flag; when set:
               u64 adam step, then per parameter m and v (same layout rules)
               f64 lr, f64 best metric, u32 stall, u32 epoch

Round-trips are bit-exact for float32 graphs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .models import ModelConfig, ModelGraph, build_model
from .optim import AdamState, PlateauSchedule

MAGIC = b"SUNW"
VERSION = 1


@dataclass
class TrainerSnapshot:
    adam: AdamState
    lr: float
    best: float
    stall: int
    epoch: int


def _write_array(out, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    out.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        out.write(struct.pack("<I", d))
    out.write(arr.tobytes())


def _read_array(buf, off):
    (ndim,) = struct.unpack_from("<B", buf, off)
    off += 1
    shape = []
    for _ in range(ndim):
        (d,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape.append(d)
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape)
    return arr.copy(), off + 4 * count


def save_checkpoint(path, graph: ModelGraph, trainer: TrainerSnapshot | None = None) -> None:
    if graph.dtype != np.float32:
        raise ValueError("checkpoints store float32 graphs only")
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<H", VERSION))
        blob = json.dumps(graph.config.to_dict(), sort_keys=True).encode("utf-8")
        out.write(struct.pack("<I", len(blob)))
        out.write(blob)
        out.write(struct.pack("<I", len(graph.params)))
        for name, p in graph.params.items():
            nb = name.encode("utf-8")
            out.write(struct.pack("<H", len(nb)))
            out.write(nb)
            _write_array(out, p.data)
        if trainer is None:
            out.write(struct.pack("<B", 0))
        else:
            out.write(struct.pack("<B", 1))
            out.write(struct.pack("<Q", trainer.adam.step))
            for name in graph.params:
                _write_array(out, trainer.adam.m[name])
                _write_array(out, trainer.adam.v[name])
            out.write(struct.pack("<dd", trainer.lr, trainer.best))
            out.write(struct.pack("<II", trainer.stall, trainer.epoch))


def load_checkpoint(path):
    """Returns (graph, TrainerSnapshot | None)."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    off = 6
    (clen,) = struct.unpack_from("<I", buf, off)
    off += 4
    config = ModelConfig.from_dict(json.loads(buf[off: off + clen].decode("utf-8")))
    off += clen
    graph = build_model(config)
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    if n != len(graph.params):
        raise DataError(f"{path}: parameter count mismatch ({n} vs {len(graph.params)})")
    for _ in range(n):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off: off + nlen].decode("utf-8")
        off += nlen
        arr, off = _read_array(buf, off)
        if name not in graph.params:
            raise DataError(f"{path}: unknown parameter {name!r}")
        p = graph.params[name]
        if arr.shape != p.data.shape:
            raise DataError(f"{path}: shape mismatch for {name!r}")
        p.data[...] = arr
    (has_opt,) = struct.unpack_from("<B", buf, off)
    off += 1
    if not has_opt:
        return graph, None
    (step,) = struct.unpack_from("<Q", buf, off)
    off += 8
    adam = AdamState(step=step)
    for name in graph.params:
        adam.m[name], off = _read_array(buf, off)
        adam.v[name], off = _read_array(buf, off)
    lr, best = struct.unpack_from("<dd", buf, off)
    off += 16
    stall, epoch = struct.unpack_from("<II", buf, off)
    return graph, TrainerSnapshot(adam=adam, lr=lr, best=best, stall=stall, epoch=epoch)


def schedule_from_snapshot(snap: TrainerSnapshot, patience: int) -> PlateauSchedule:
    sched = PlateauSchedule(lr=snap.lr, patience=patience)
    sched.best = snap.best
    sched.stall = snap.stall
    return sched
