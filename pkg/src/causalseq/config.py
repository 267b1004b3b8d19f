"""Flat ``key = value`` run configuration with dotted sections.

A config file plus command-line overrides resolve into one RunConfig;
unknown keys are a hard error and every run logs the fully resolved
mapping next to its outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .models import ModelConfig
from .trainer import TASK_KINDS, TrainConfig


def _bool(v: str) -> bool:
    if v.lower() in ("true", "yes", "1", "on"):
        return True
    if v.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt(parser):
    def parse(v: str):
        return None if v.lower() in ("none", "") else parser(v)

    return parse


SCHEMA = {
    "model.variant": str,
    "model.levels": int,
    "model.stride": int,
    "model.width": int,
    "model.hidden": int,
    "model.features": int,
    "model.depth": int,
    "model.dropout": float,
    "model.emb_dropout": _opt(float),
    "model.in_channels": int,
    "model.out_channels": int,
    "model.io_mode": str,
    "model.vocab_size": int,
    "model.embed_dim": int,
    "model.pitches": int,
    "model.leaky_slope": float,
    "model.weight_norm": _bool,
    "model.seed": int,
    "train.learning_rate": float,
    "train.batch_size": int,
    "train.max_epochs": int,
    "train.patience": int,
    "train.clip": _opt(float),
    "train.clip_mode": str,
    "train.target_span": int,
    "train.seed": int,
    "train.eval_cadence": int,
    "train.steps_per_epoch": _opt(int),
    "task.kind": str,
    "data.path": str,
    "data.val_path": _opt(str),
    "data.test_path": _opt(str),
    "data.vocab_path": _opt(str),
    "data.split": str,
    "run.out_dir": str,
    "run.seed": _opt(int),
    "generate.temperature": float,
    "generate.steps": int,
    "profile.input_length": int,
    "profile.steps": int,
    "profile.bench": _bool,
    "profile.bench_hidden": int,
    "profile.bench_steps": int,
}

DEFAULTS = {
    "task.kind": "char",
    "data.split": "0.8,0.1,0.1",
    "run.out_dir": "runs/out",
    "generate.temperature": 0.95,
    "generate.steps": 256,
    "profile.input_length": 1024,
    "profile.steps": 0,
    "profile.bench": False,
    "profile.bench_hidden": 96,
    "profile.bench_steps": 384,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        out[key] = val
    return out


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config_text(text, source=str(path))


def load_preset(name: str) -> dict:
    """Shipped preset by name (e.g. 'char-lm-sequnet')."""
    ref = resources.files("causalseq").joinpath(f"presets/{name}.cfg")
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r} (see causalseq.config.list_presets())")
    return parse_config_text(ref.read_text(encoding="utf-8"), source=f"preset:{name}")


def list_presets() -> list[str]:
    folder = resources.files("causalseq").joinpath("presets")
    return sorted(p.name[: -len(".cfg")] for p in folder.iterdir()
                  if p.name.endswith(".cfg"))


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    values: dict  # resolved typed key -> value mapping

    def __getitem__(self, key):
        return self.values[key]

    def dump(self) -> str:
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            lines.append(f"{key} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"


def resolve(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Typed resolution of file values + overrides; rejects unknown keys."""
    merged = dict(DEFAULTS)
    values: dict = {}
    for source in (raw, overrides or {}):
        for key, val in source.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = val
    for key, val in merged.items():
        parser = SCHEMA[key]
        if isinstance(val, str):
            try:
                values[key] = parser(val)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"bad value for {key}: {val!r} ({e})") from e
        else:
            values[key] = val

    model_kwargs = {k.split(".", 1)[1]: v for k, v in values.items()
                    if k.startswith("model.")}
    train_kwargs = {k.split(".", 1)[1]: v for k, v in values.items()
                    if k.startswith("train.")}
    model = ModelConfig(**model_kwargs)
    model.validate()
    train = TrainConfig(**train_kwargs)
    train.validate()
    if values.get("run.seed") is not None:
        train.seed = values["run.seed"]
    kind = values.get("task.kind", "char")
    if kind not in TASK_KINDS:
        raise ConfigError(f"task.kind must be one of {TASK_KINDS}, got {kind!r}")
    return RunConfig(model=model, train=train, values=values)


def parse_split(spec: str) -> tuple[float, float, float]:
    try:
        parts = [float(p) for p in spec.split(",")]
    except ValueError as e:
        raise ConfigError(f"bad data.split {spec!r}") from e
    if len(parts) != 3 or abs(sum(parts) - 1.0) > 1e-6 or min(parts) < 0:
        raise ConfigError(f"data.split must be three fractions summing to 1, got {spec!r}")
    return tuple(parts)  # type: ignore[return-value]
