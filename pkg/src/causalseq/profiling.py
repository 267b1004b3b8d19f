"""Instrumented complexity accounting and generation-speed benchmarks.

Activation counts follow the frame-per-feature-map accounting used in
the multi-scale analysis: a counted convolution at output rate r
contributes I/r frames for I input frames (channels excluded), and the
baseline contributes its per-level output map only.  Because the models
never zero-pad, the frames actually materialized fall slightly short of
the rate-ideal numbers; reports carry both ("activations" ideal,
"frames" exact).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError
from .models import ModelConfig, ModelGraph, build_model, receptive_field_analytic
from .streaming import init_stream

REPORT_VERSION = 1
CSV_COLUMNS = ["level", "activations", "frames", "bound", "updates", "update_period"]


class ActivationBound(NamedTuple):
    series: float
    cap: float


def analytic_activation_bound(levels: int, k: int, input_length: int) -> ActivationBound:
    """Exact per-rate activation series for the two-conv multi-scale block
    layout, plus the geometric cap (8I at stride 2)."""
    if k < 2:
        raise ValueError("stride must be >= 2")
    i = float(input_length)
    series = sum(3.0 * i / k ** (lvl - 1) + i / k ** lvl for lvl in range(1, levels + 1))
    series += i / k ** levels  # bottleneck map
    cap = 4.0 * i * k / (k - 1.0)  # sum over 4*I/k^j for all j >= 0
    return ActivationBound(series, cap)


def count_activations(graph: ModelGraph, input_length: int):
    """Run one training-mode forward and tally counted feature-map frames.

    Returns a dict: per-level entries hold the rate-ideal count
    (``activations``) and the exact materialized frames (``frames``);
    level 0 is the bottleneck."""
    if input_length < graph.min_input_length():
        raise ValueError(f"input_length must be >= {graph.min_input_length()}")
    cfg = graph.config
    rng = np.random.default_rng(0)
    if cfg.io_mode == "embedding_tied":
        x = rng.integers(0, cfg.vocab_size, size=input_length)
    else:
        c_in, _ = cfg.io_channels()
        x = rng.standard_normal((c_in, input_length)).astype(graph.dtype)
    trace: list = []
    graph.forward(x, training=True, rng=rng, trace=trace)
    levels: dict[int, dict] = {}
    for entry in trace:
        lvl = entry["level"]
        if lvl < 0:
            continue
        row = levels.setdefault(lvl, {"activations": 0.0, "frames": 0})
        row["activations"] += input_length / entry["rate"]
        row["frames"] += entry["frames"]
    return levels


def measure_updates(graph: ModelGraph, n_steps: int, rng=None):
    """Stream n_steps teacher-forced random frames; returns
    (per-level update counts, amortized updates/step)."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    rng = rng or np.random.default_rng(0)
    cfg = graph.config
    ctx_len = graph.min_input_length()
    state, _ = init_stream(graph, _random_stream(graph, ctx_len, rng))
    for _ in range(n_steps):
        state.step(_random_frame(graph, rng))
    counts = state.level_updates.copy()
    return counts, float(counts.sum()) / n_steps


def expected_amortized(levels: int, k: int) -> float:
    return sum(1.0 / k ** (i - 1) for i in range(1, levels + 1))


def bench_generation(models: dict[str, ModelGraph], n_steps: int,
                     runs: int = 5, warmup: int = 32, rng=None) -> dict[str, float]:
    """Median samples/sec per model over >= `runs` timed runs of n_steps
    teacher-forced streaming steps each (monotonic clock, single thread,
    warmup excluded)."""
    if n_steps < 1:
        raise ValueError("nothing to benchmark (n_steps must be >= 1)")
    if runs < 1:
        raise ValueError("need at least one timed run")
    rng = rng or np.random.default_rng(0)
    rates = {}
    for name, graph in models.items():
        frames = [_random_frame(graph, rng) for _ in range(256)]
        state, _ = init_stream(graph, _random_stream(graph, graph.min_input_length(), rng))
        for i in range(warmup):
            state.step(frames[i % len(frames)])
        samples = []
        for _ in range(runs):
            t0 = time.perf_counter()
            for i in range(n_steps):
                state.step(frames[i % len(frames)])
            samples.append(n_steps / (time.perf_counter() - t0))
        rates[name] = float(np.median(samples))
    return rates


def matched_baseline_config(target_rf: int, hidden: int, io_kwargs: dict,
                            max_levels: int = 14) -> ModelConfig:
    """Dilated-baseline config whose receptive field best matches target_rf."""
    best = None
    for width in range(2, 8):
        for levels in range(1, max_levels + 1):
            rf = 1 + 2 * (width - 1) * (2 ** levels - 1)
            score = abs(np.log(rf / target_rf))
            if best is None or score < best[0]:
                best = (score, levels, width)
    _, levels, width = best
    return ModelConfig(variant="dilated_baseline", levels=levels, width=width,
                       stride=2, hidden=hidden, **io_kwargs)


@dataclass
class CostReport:
    fingerprint: str
    config: dict
    input_length: int
    level_rows: list = field(default_factory=list)
    analytic_series: float = 0.0
    analytic_cap: float = 0.0
    total_activations: float = 0.0
    total_frames: int = 0
    amortized_updates: float | None = None
    expected_updates: float | None = None
    timing: dict = field(default_factory=dict)
    speedup: float | None = None


def build_cost_report(graph: ModelGraph, input_length: int,
                      n_steps: int | None = None) -> CostReport:
    cfg = graph.config
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    report = CostReport(
        fingerprint=hashlib.sha256(blob).hexdigest()[:12],
        config=cfg.to_dict(),
        input_length=input_length,
    )
    levels = count_activations(graph, input_length)
    bound = analytic_activation_bound(cfg.levels, cfg.stride, input_length)
    report.analytic_series = bound.series
    report.analytic_cap = bound.cap
    counts, amortized = (None, None)
    if n_steps:
        counts, amortized = measure_updates(graph, n_steps)
        report.amortized_updates = amortized
        report.expected_updates = (
            expected_amortized(cfg.levels, cfg.stride)
            if cfg.variant != "dilated_baseline" else float(cfg.levels))
    for lvl in sorted(levels):
        row = levels[lvl]
        per_level_bound = (4.0 * input_length / cfg.stride ** (lvl - 1)
                           if lvl > 0 else input_length / cfg.stride ** cfg.levels)
        updates = int(counts[lvl - 1]) if (counts is not None and lvl > 0) else 0
        report.level_rows.append({
            "level": lvl,
            "activations": row["activations"],
            "frames": row["frames"],
            "bound": per_level_bound,
            "updates": updates,
            "update_period": cfg.stride ** (lvl - 1) if lvl > 0 else cfg.stride ** cfg.levels,
        })
        report.total_activations += row["activations"]
        report.total_frames += row["frames"]
    return report


def emit_report(report: CostReport, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        _emit_csv(report, path)
    elif fmt == "markdown":
        _emit_markdown(report, path)
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def _emit_csv(report: CostReport, path) -> None:
    lines = [f"# causalseq cost report v{REPORT_VERSION} fingerprint={report.fingerprint} "
             f"input_length={report.input_length}"]
    lines.append(",".join(CSV_COLUMNS))
    for row in report.level_rows:
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    lines.append(f"# totals activations={_fmt(report.total_activations)} "
                 f"frames={report.total_frames} series={_fmt(report.analytic_series)} "
                 f"cap={_fmt(report.analytic_cap)}")
    if report.amortized_updates is not None:
        lines.append(f"# updates amortized={report.amortized_updates!r} "
                     f"expected={report.expected_updates!r}")
    for name, rate in sorted(report.timing.items()):
        lines.append(f"# timing {name}={rate!r}")
    if report.speedup is not None:
        lines.append(f"# speedup {report.speedup!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def _emit_markdown(report: CostReport, path) -> None:
    lines = [f"# Cost report (`{report.fingerprint}`)", "",
             f"Input length {report.input_length}; analytic series "
             f"{_fmt(report.analytic_series)}, cap {_fmt(report.analytic_cap)}.", "",
             "| " + " | ".join(CSV_COLUMNS) + " |",
             "|" + "---|" * len(CSV_COLUMNS)]
    for row in report.level_rows:
        lines.append("| " + " | ".join(_fmt(row[c]) for c in CSV_COLUMNS) + " |")
    lines.append("")
    lines.append(f"Total activations {_fmt(report.total_activations)} "
                 f"({report.total_frames} exact frames).")
    if report.amortized_updates is not None:
        lines.append(f"Amortized updates/step {report.amortized_updates:.4f} "
                     f"(analytic {report.expected_updates:.4f}).")
    for name, rate in sorted(report.timing.items()):
        lines.append(f"- {name}: {rate:.1f} samples/sec")
    if report.speedup is not None:
        lines.append(f"- speedup: {report.speedup:.2f}x")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def parse_report_csv(path) -> dict:
    """Round-trip reader for the CSV report."""
    rows = []
    meta = {}
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or not lines[0].startswith("# causalseq cost report"):
        raise DataError(f"{path}: not a cost report")
    header_seen = False
    for ln in lines[1:]:
        if ln.startswith("#"):
            for tok in ln[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    meta[key] = val
            continue
        if not header_seen:
            if ln.split(",") != CSV_COLUMNS:
                raise DataError(f"{path}: unexpected header {ln!r}")
            header_seen = True
            continue
        vals = ln.split(",")
        rows.append({c: float(v) for c, v in zip(CSV_COLUMNS, vals)})
    return {"rows": rows, "meta": meta}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if not v.is_integer() else str(int(v))
    return str(v)


def _random_stream(graph: ModelGraph, n: int, rng):
    cfg = graph.config
    if cfg.io_mode == "embedding_tied":
        return rng.integers(0, cfg.vocab_size, size=n)
    c_in, _ = cfg.io_channels()
    return rng.standard_normal((c_in, n)).astype(graph.dtype)


def _random_frame(graph: ModelGraph, rng):
    cfg = graph.config
    if cfg.io_mode == "embedding_tied":
        return int(rng.integers(0, cfg.vocab_size))
    c_in, _ = cfg.io_channels()
    return rng.standard_normal(c_in).astype(graph.dtype)
