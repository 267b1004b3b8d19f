"""Training loop: Adam + clipping + plateau LR halving, best-checkpoint
selection, per-epoch CSV metrics log."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as datamod
from . import metrics, ops
from .autodiff import Tape, backward
from .checkpoint import TrainerSnapshot, save_checkpoint
from .errors import ConfigError
from .models import ModelGraph
from .optim import AdamState, PlateauSchedule, adam_step

TASK_KINDS = ("char", "word", "music", "audio")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 10
    patience: int = 5
    clip: float | None = None
    clip_mode: str = "norm"
    target_span: int = 32
    seed: int = 0
    eval_cadence: int = 1
    steps_per_epoch: int | None = None

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.target_span < 1:
            raise ConfigError("target_span must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigError("batch_size must be >= 1 and max_epochs >= 0")
        if self.clip is not None and self.clip <= 0:
            raise ConfigError("clip magnitude must be positive")


@dataclass
class Task:
    kind: str  # char | word | music | audio
    train: object
    val: object
    test: object
    vocab: list | None = None

    @property
    def metric_name(self) -> str:
        return {"char": "bpc", "word": "word_ppl",
                "music": "frame_ppl", "audio": "bpa"}[self.kind]


def task_metric(graph: ModelGraph, task: Task, split) -> float:
    if task.kind == "music":
        return metrics.evaluate_frame_ppl(graph, split)
    if task.kind == "word":
        return metrics.evaluate_word_ppl(graph, split)
    return metrics.evaluate_bpc(graph, split)  # char and audio: bits/symbol


def task_batches(graph: ModelGraph, task: Task, tc: TrainConfig,
                 rng: np.random.Generator):
    if task.kind == "music":
        return datamod.make_piece_batches(task.train, graph, tc.batch_size, rng)
    one_hot = graph.config.in_channels if graph.config.io_mode == "linear" else None
    return datamod.make_batches(task.train, graph, tc.batch_size, tc.target_span,
                                rng, one_hot=one_hot, n_batches=tc.steps_per_epoch)


def example_loss(graph: ModelGraph, ex: datamod.Example, rng: np.random.Generator):
    """Forward + loss on the last t_out aligned predictions."""
    tape = Tape()
    out = graph.forward(ex.inputs, training=True, rng=rng, tape=tape)
    logits = ops.crop_front(out.x, out.n - ex.t_out)
    if graph.config.io_mode == "pitch_logits":
        return ops.binary_cross_entropy_sum(logits, ex.targets)
    return ops.softmax_cross_entropy(logits, ex.targets)


def train_step(graph: ModelGraph, batch, adam: AdamState, lr: float,
               rng: np.random.Generator, clip=None, clip_mode="norm") -> float:
    """One optimizer step on one batch; returns the batch mean loss."""
    graph.zero_grads()
    total = 0.0
    for ex in batch:
        loss = example_loss(graph, ex, rng)
        backward(loss)
        total += float(loss.data)
    scale = 1.0 / len(batch)
    for p in graph.params.values():
        p.grad *= scale
    adam_step(graph.params, adam, lr, clip=clip, clip_mode=clip_mode)
    return total * scale


def train(graph: ModelGraph, task: Task, tc: TrainConfig, out_dir,
          log=print) -> dict:
    """Full training run; writes best.sunw and metrics.csv under out_dir."""
    tc.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    adam = AdamState.for_params(graph.params)
    sched = PlateauSchedule(lr=tc.learning_rate, patience=tc.patience)
    best_path = out_dir / "best.sunw"
    rows = []
    best = math.inf
    for epoch in range(1, tc.max_epochs + 1):
        t_start = time.perf_counter()
        rng = np.random.default_rng((tc.seed, epoch))
        batches = task_batches(graph, task, tc, rng)
        running = 0.0
        for batch in batches:
            running += train_step(graph, batch, adam, sched.lr, rng,
                                  clip=tc.clip, clip_mode=tc.clip_mode)
        train_loss = running / max(1, len(batches))
        val_metric = math.nan
        if epoch % tc.eval_cadence == 0 or epoch == tc.max_epochs:
            val_metric = task_metric(graph, task, task.val)
            if val_metric < best:
                best = val_metric
                save_checkpoint(best_path, graph, TrainerSnapshot(
                    adam=adam, lr=sched.lr, best=best, stall=sched.stall,
                    epoch=epoch))
            sched.on_epoch_end(val_metric, epoch)
        seconds = time.perf_counter() - t_start
        rows.append({"epoch": epoch, "train_loss": train_loss,
                     "val_metric": val_metric, "lr": sched.lr})
        log(f"epoch {epoch}: train {train_loss:.4f}  "
            f"val {task.metric_name} {val_metric:.4f}  lr {sched.lr:.2e}  "
            f"({seconds:.1f}s)")
    _write_metrics_csv(out_dir / "metrics.csv", rows)
    result = {"best_val": best, "epochs": tc.max_epochs,
              "metric": task.metric_name, "checkpoint": str(best_path)}
    if task.test is not None and best < math.inf:
        from .checkpoint import load_checkpoint

        best_graph, _ = load_checkpoint(best_path)
        result["test"] = task_metric(best_graph, task, task.test)
        log(f"test {task.metric_name}: {result['test']:.4f}")
    return result


def _write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        # timing stays out of the log so fixed seeds give identical files
        writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss",
                                               "val_metric", "lr"])
        writer.writeheader()
        writer.writerows(rows)
