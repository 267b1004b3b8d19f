"""Dataset loading and batch assembly.

External formats:
  - text corpus: UTF-8 file; char task uses character symbols, word task
    whitespace tokens with an "<unk>" entry and a vocab file (one token
    per line, rank order);
  - piano-roll: JSON array of pieces, piece = array of frames, frame =
    array of active pitch indices in [0, 88);
  - audio: 16-bit little-endian mono PCM at 16 kHz, raw or WAV with the
    standard 44-byte header (other rates are an error, resampling is out
    of scope).
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError
from .models import ModelGraph

UNK = "<unk>"
N_PITCHES = 88
AUDIO_RATE = 16000
BUILTIN_PREFIX = "builtin:"


def resolve_path(path):
    """Paths may name bundled datasets as builtin:<name> (e.g.
    builtin:tiny_corpus.txt)."""
    s = str(path)
    if not s.startswith(BUILTIN_PREFIX):
        return path
    name = s[len(BUILTIN_PREFIX):]
    ref = resources.files("causalseq").joinpath(f"data/{name}")
    if not ref.is_file():
        raise DataError(f"no bundled dataset named {name!r}")
    return str(ref)


# -- text -------------------------------------------------------------------

def load_text_corpus(path, mode: str = "char", vocab_path=None):
    """Returns (ids int64 array, vocab list).  Char vocab is the sorted
    set of characters; word vocab is frequency-ranked with UNK first
    unless a vocab file fixes the order."""
    path = resolve_path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise DataError(f"cannot read corpus {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise DataError(f"{path} is not valid UTF-8: {e}") from e
    if mode == "char":
        vocab = sorted(set(text))
        index = {ch: i for i, ch in enumerate(vocab)}
        ids = np.fromiter((index[ch] for ch in text), dtype=np.int64, count=len(text))
        return ids, vocab
    if mode != "word":
        raise ValueError(f"unknown text mode {mode!r}")
    tokens = text.split()
    if vocab_path is not None:
        vocab = load_vocab(vocab_path)
    else:
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        vocab = [UNK] + [t for t in ranked if t != UNK]
    index = {t: i for i, t in enumerate(vocab)}
    if UNK not in index:
        raise DataError(f"vocab {vocab_path} lacks the {UNK!r} entry")
    unk = index[UNK]
    ids = np.fromiter((index.get(t, unk) for t in tokens), dtype=np.int64, count=len(tokens))
    return ids, vocab


def load_vocab(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        vocab = [line.rstrip("\n") for line in f if line.rstrip("\n")]
    if len(set(vocab)) != len(vocab):
        raise DataError(f"vocab {path} has duplicate entries")
    return vocab


def save_vocab(path, vocab) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for token in vocab:
            f.write(token + "\n")


# -- piano roll ---------------------------------------------------------------

def load_pianoroll(path) -> list[np.ndarray]:
    """JSON pieces -> list of [88, T] float32 binary arrays."""
    path = resolve_path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read piano-roll {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed JSON at line {e.lineno}, column {e.colno}") from e
    if not isinstance(raw, list):
        raise DataError(f"{path}: top level must be an array of pieces")
    pieces = []
    for pi, piece in enumerate(raw):
        if not isinstance(piece, list):
            raise DataError(f"{path}: piece {pi} is not an array of frames")
        arr = np.zeros((N_PITCHES, len(piece)), dtype=np.float32)
        for ti, frame in enumerate(piece):
            for pitch in frame:
                if not isinstance(pitch, int) or not 0 <= pitch < N_PITCHES:
                    raise DataError(
                        f"{path}: piece {pi}, frame {ti}: bad pitch {pitch!r}")
                arr[pitch, ti] = 1.0
        pieces.append(arr)
    return pieces


def save_pianoroll(path, pieces) -> None:
    out = []
    for arr in pieces:
        piece = []
        for t in range(arr.shape[1]):
            piece.append([int(p) for p in np.nonzero(arr[:, t])[0]])
        out.append(piece)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(out, f)


# -- audio --------------------------------------------------------------------

def load_audio_pcm(path) -> np.ndarray:
    """16-bit LE mono PCM (raw or 44-byte-header WAV) -> float32 in [-1, 1]."""
    path = resolve_path(path)
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] == b"RIFF":
        if len(blob) < 44 or blob[8:12] != b"WAVE":
            raise DataError(f"{path}: truncated or non-WAVE RIFF file")
        fmt, channels, rate = struct.unpack_from("<HHI", blob, 20)
        bits = struct.unpack_from("<H", blob, 34)[0]
        if fmt != 1 or bits != 16:
            raise DataError(f"{path}: only 16-bit PCM WAV is supported")
        if channels != 1:
            raise DataError(f"{path}: expected mono, got {channels} channels")
        if rate != AUDIO_RATE:
            raise DataError(f"{path}: expected {AUDIO_RATE} Hz, got {rate}"
                            " (resampling is out of scope)")
        if blob[36:40] != b"data":
            raise DataError(f"{path}: expected the standard 44-byte header")
        (size,) = struct.unpack_from("<I", blob, 40)
        payload = blob[44: 44 + size]
    else:
        payload = blob
    samples = np.frombuffer(payload, dtype="<i2").astype(np.float32)
    return samples / 32768.0


def save_wav(path, samples, rate: int = AUDIO_RATE) -> None:
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(pcm * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    with open(path, "wb") as f:
        f.write(b"RIFF")
        f.write(struct.pack("<I", 36 + len(payload)))
        f.write(b"WAVEfmt ")
        f.write(struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16))
        f.write(b"data")
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)


# -- batching -----------------------------------------------------------------

@dataclass
class Example:
    inputs: np.ndarray   # model input (indices, one-hot, or pitch frames)
    targets: np.ndarray  # aligned targets for the last T_out outputs
    t_out: int


def window_input_length(graph: ModelGraph, t_out: int) -> int:
    """Smallest input length whose output covers t_out frames."""
    t = graph.min_input_length() + t_out - 1
    while graph.output_length(t) < t_out:
        t += 1
    return t


def make_batches(stream, graph: ModelGraph, batch_size: int, t_out: int,
                 rng: np.random.Generator, one_hot: int | None = None,
                 n_batches: int | None = None):
    """Random fixed-length windows over a symbol stream.

    Every example uses the last ``t_out`` model outputs as targets; the
    window is the shortest input covering them, sampled from a random
    position (deterministic under a fixed seed)."""
    stream = np.asarray(stream)
    t_in = window_input_length(graph, t_out)
    span = t_in + 1  # inputs plus the final target symbol
    n = stream.shape[-1]
    if n < span:
        raise DataError(f"stream of {n} symbols is shorter than one window ({span})")
    if n_batches is None:
        n_batches = max(1, n // max(1, batch_size * t_out))
    batches = []
    for _ in range(n_batches):
        batch = []
        for _ in range(batch_size):
            i = int(rng.integers(0, n - span + 1))
            w = stream[i: i + span]
            inputs = w[:-1]
            if one_hot is not None:
                x = np.zeros((one_hot, t_in), dtype=np.float32)
                x[inputs.astype(np.int64), np.arange(t_in)] = 1.0
                inputs = x
            batch.append(Example(inputs=inputs, targets=w[-t_out:], t_out=t_out))
        batches.append(batch)
    return batches


def make_piece_batches(pieces, graph: ModelGraph, batch_size: int,
                       rng: np.random.Generator):
    """Whole-piece batching for piano rolls; too-short pieces are skipped
    with a warning."""
    min_len = graph.min_input_length() + 1
    usable = []
    for i, piece in enumerate(pieces):
        if piece.shape[1] < min_len:
            warnings.warn(f"piece {i} has {piece.shape[1]} frames; "
                          f"needs {min_len}, skipped")
            continue
        usable.append(piece)
    if not usable:
        raise DataError(f"no piece reaches the minimum length {min_len}")
    order = rng.permutation(len(usable))
    batches = []
    for b0 in range(0, len(order), batch_size):
        batch = []
        for idx in order[b0: b0 + batch_size]:
            piece = usable[idx]
            inputs = piece[:, :-1]
            t_out = graph.output_length(inputs.shape[1])
            batch.append(Example(inputs=inputs.astype(np.float32),
                                 targets=piece[:, -t_out:], t_out=t_out))
        batches.append(batch)
    return batches
