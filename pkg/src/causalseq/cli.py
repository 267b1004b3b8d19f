"""Command-line surface: train, eval, generate, profile, gradcheck.

Exit codes: 0 success (gradcheck: all ops pass), 2 configuration error,
3 data error, 4 numeric abort (non-finite values).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import data as datamod
from . import generation, metrics, mulaw, profiling
from .checkpoint import load_checkpoint
from .checks import run_gradcheck
from .errors import ConfigError, DataError, NumericError
from .models import build_model, count_parameters, receptive_field_analytic
from .trainer import Task, train

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalseq",
                                description="multi-scale causal sequence models")
    sub = p.add_subparsers(required=True)

    def common(sp):
        sp.add_argument("--config", help="config file path or preset name")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out-dir", default=None)

    sp = sub.add_parser("train", help="train a model, keep the best checkpoint")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("generate", help="continue a seed sequence")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--seed-input", required=True, help="seed file (task format)")
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--temperature", type=float, default=None)
    sp.add_argument("--naive", action="store_true",
                    help="recompute full forwards instead of streaming")
    sp.add_argument("--out", required=True)
    sp.add_argument("--vocab", default=None, help="vocab file for text tasks")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("profile", help="activation/update accounting and benchmarks")
    common(sp)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(sp)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def _resolve(args, need_config=True) -> cfgmod.RunConfig:
    raw = {}
    if args.config:
        path = Path(args.config)
        if path.exists():
            raw = cfgmod.load_config_file(path)
        else:
            raw = cfgmod.load_preset(args.config)
    elif need_config:
        raise ConfigError("--config is required (file path or preset name)")
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
        overrides["model.seed"] = overrides.get("model.seed", str(args.seed))
    if args.out_dir is not None:
        overrides["run.out_dir"] = args.out_dir
    return cfgmod.resolve(raw, overrides)


def _log_resolved(rc: cfgmod.RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved.cfg").write_text(rc.dump(), encoding="utf-8")
    print(rc.dump(), end="")


def _load_task(rc: cfgmod.RunConfig, graph=None):
    kind = rc["task.kind"]
    path = rc.values.get("data.path")
    if not path:
        raise DataError("data.path is not set")
    path = datamod.resolve_path(path)
    if not Path(path).exists():
        raise DataError(f"dataset not found: {path}")
    frac = cfgmod.parse_split(rc["data.split"])
    if kind in ("char", "word"):
        ids, vocab = datamod.load_text_corpus(path, mode=kind,
                                              vocab_path=rc.values.get("data.vocab_path"))
        tr, va, te = _split_stream(ids, rc, frac)
        return Task(kind=kind, train=tr, val=va, test=te, vocab=vocab)
    if kind == "music":
        pieces = _maybe_alt_splits(rc, datamod.load_pianoroll)
        if pieces is not None:
            return Task(kind="music", train=pieces[0], val=pieces[1], test=pieces[2])
        all_pieces = datamod.load_pianoroll(path)
        n = len(all_pieces)
        a = max(1, int(n * frac[0]))
        b = max(a + 1, a + int(n * frac[1]))
        return Task(kind="music", train=all_pieces[:a], val=all_pieces[a:b],
                    test=all_pieces[b:] or all_pieces[a:b])
    if kind == "audio":
        samples = datamod.load_audio_pcm(path)
        codes = mulaw.mu_law_encode(samples)
        tr, va, te = _split_stream(codes, rc, frac)
        return Task(kind="audio", train=tr, val=va, test=te)
    raise ConfigError(f"unknown task kind {kind!r}")


def _maybe_alt_splits(rc, loader):
    va, te = rc.values.get("data.val_path"), rc.values.get("data.test_path")
    if va and te:
        return (loader(rc["data.path"]), loader(va), loader(te))
    return None


def _split_stream(ids, rc, frac):
    va_p, te_p = rc.values.get("data.val_path"), rc.values.get("data.test_path")
    if va_p and te_p:
        kind = rc["task.kind"]
        if kind in ("char", "word"):
            va, _ = datamod.load_text_corpus(va_p, mode=kind,
                                             vocab_path=rc.values.get("data.vocab_path"))
            te, _ = datamod.load_text_corpus(te_p, mode=kind,
                                             vocab_path=rc.values.get("data.vocab_path"))
        else:
            va = mulaw.mu_law_encode(datamod.load_audio_pcm(va_p))
            te = mulaw.mu_law_encode(datamod.load_audio_pcm(te_p))
        return ids, va, te
    n = len(ids)
    a = int(n * frac[0])
    b = a + int(n * frac[1])
    return ids[:a], ids[a:b], ids[b:]


def _build_graph_for_task(rc: cfgmod.RunConfig, task: Task):
    mc = rc.model
    if task.kind in ("char", "word"):
        mc.io_mode = "embedding_tied"
        mc.vocab_size = len(task.vocab)
    elif task.kind == "music":
        mc.io_mode = "pitch_logits"
        mc.pitches = datamod.N_PITCHES
    else:
        mc.io_mode = "linear"
        mc.in_channels = mulaw.LEVELS
        mc.out_channels = mulaw.LEVELS
    mc.validate()
    return build_model(mc)


def cmd_train(args) -> int:
    rc = _resolve(args)
    out_dir = Path(rc["run.out_dir"])
    task = _load_task(rc)
    graph = _build_graph_for_task(rc, task)
    _log_resolved(rc, out_dir)
    print(f"model: {rc.model.variant}, {count_parameters(graph)} parameters, "
          f"receptive field {receptive_field_analytic(rc.model)}")
    if task.vocab is not None:
        datamod.save_vocab(out_dir / "vocab.txt", task.vocab)
    result = train(graph, task, rc.train, out_dir)
    (out_dir / "result.json").write_text(json.dumps(result, indent=2), encoding="utf-8")
    return 0


def cmd_eval(args) -> int:
    rc = _resolve(args, need_config=False) if args.config or args.set else None
    graph, _ = load_checkpoint(args.checkpoint)
    kind = _task_kind_of(graph, rc)
    if kind in ("char", "word"):
        vocab_path = rc.values.get("data.vocab_path") if rc else None
        if vocab_path is None:
            guess = Path(args.checkpoint).parent / "vocab.txt"
            vocab_path = str(guess) if guess.exists() else None
        if vocab_path is None:
            raise DataError("text evaluation needs data.vocab_path (or vocab.txt "
                            "next to the checkpoint)")
        vocab = datamod.load_vocab(vocab_path)
        index = {t: i for i, t in enumerate(vocab)}
        if kind == "char":
            text = Path(args.data).read_text(encoding="utf-8")
            missing = set(text) - set(index)
            if missing:
                raise DataError(f"eval text has characters outside the vocab: {sorted(missing)[:8]}")
            ids = np.fromiter((index[c] for c in text), dtype=np.int64)
            value, name = metrics.evaluate_bpc(graph, ids), "bpc"
        else:
            unk = index.get(datamod.UNK)
            toks = Path(args.data).read_text(encoding="utf-8").split()
            ids = np.fromiter((index.get(t, unk) for t in toks), dtype=np.int64)
            value, name = metrics.evaluate_word_ppl(graph, ids), "word_ppl"
    elif kind == "music":
        value, name = metrics.evaluate_frame_ppl(graph, datamod.load_pianoroll(args.data)), "frame_ppl"
    else:
        codes = mulaw.mu_law_encode(datamod.load_audio_pcm(args.data))
        value, name = metrics.evaluate_bpc(graph, codes), "bpa"
    print(f"{name} = {value:.6f}")
    return 0


def _task_kind_of(graph, rc):
    if rc is not None and "task.kind" in rc.values:
        return rc["task.kind"]
    io = graph.config.io_mode
    if io == "pitch_logits":
        return "music"
    if io == "embedding_tied":
        return "char"
    return "audio"


def cmd_generate(args) -> int:
    rc = _resolve(args, need_config=False) if args.config or args.set else None
    graph, _ = load_checkpoint(args.checkpoint)
    kind = _task_kind_of(graph, rc)
    steps = args.steps if args.steps is not None else (
        rc["generate.steps"] if rc else 256)
    temperature = args.temperature if args.temperature is not None else (
        rc["generate.temperature"] if rc else 0.95)
    seed_value = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed_value)

    if kind in ("char", "word"):
        vocab_path = args.vocab or str(Path(args.checkpoint).parent / "vocab.txt")
        if not Path(vocab_path).exists():
            raise DataError(f"vocab file not found: {vocab_path}")
        vocab = datamod.load_vocab(vocab_path)
        index = {t: i for i, t in enumerate(vocab)}
        text = Path(args.seed_input).read_text(encoding="utf-8")
        if kind == "char":
            seed_ids = np.fromiter((index[c] for c in text if c in index), dtype=np.int64)
        else:
            unk = index.get(datamod.UNK)
            seed_ids = np.fromiter((index.get(t, unk) for t in text.split()), dtype=np.int64)
        out = generation.generate(graph, seed_ids, steps, temperature, rng,
                                  naive=args.naive)
        sep = "" if kind == "char" else " "
        Path(args.out).write_text(sep.join(vocab[i] for i in out), encoding="utf-8")
    elif kind == "music":
        pieces = datamod.load_pianoroll(args.seed_input)
        out = generation.generate(graph, pieces[0], steps, temperature, rng,
                                  naive=args.naive)
        datamod.save_pianoroll(args.out, [out])
    else:
        codes = mulaw.mu_law_encode(datamod.load_audio_pcm(args.seed_input))
        out = generation.generate(graph, codes, steps, temperature, rng,
                                  naive=args.naive)
        datamod.save_wav(args.out, mulaw.mu_law_decode(out))
    print(f"wrote {args.out} ({steps} generated steps, temperature {temperature})")
    return 0


def cmd_profile(args) -> int:
    rc = _resolve(args)
    out_dir = Path(rc["run.out_dir"])
    _log_resolved(rc, out_dir)
    mc = rc.model
    mc.validate()
    graph = build_model(mc)
    input_length = max(rc["profile.input_length"], graph.min_input_length())
    n_steps = rc["profile.steps"] or 10 * mc.stride ** mc.levels
    report = profiling.build_cost_report(graph, input_length, n_steps=n_steps)
    if rc["profile.bench"]:
        io = dict(in_channels=mc.in_channels, out_channels=mc.out_channels,
                  io_mode="linear")
        h = rc["profile.bench_hidden"]
        base_cfg = profiling.matched_baseline_config(
            receptive_field_analytic(mc), h, io)
        pair = {"model": graph, "baseline": build_model(base_cfg)}
        report.timing = profiling.bench_generation(pair, rc["profile.bench_steps"])
        report.speedup = report.timing["model"] / report.timing["baseline"]
    profiling.emit_report(report, out_dir / "report.csv", "csv")
    profiling.emit_report(report, out_dir / "report.md", "markdown")
    print(f"total activations {report.total_activations:.1f} "
          f"(series {report.analytic_series:.1f}, cap {report.analytic_cap:.1f})")
    if report.amortized_updates is not None:
        print(f"amortized updates/step {report.amortized_updates:.4f} "
              f"(analytic {report.expected_updates:.4f})")
    print(f"wrote {out_dir}/report.csv and report.md")
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = run_gradcheck(seed=seed)
    worst = 0.0
    for name, err in results:
        status = "ok" if err < 1e-5 else "FAIL"
        print(f"{status:4s} {name:38s} max rel err {err:.3e}")
        worst = max(worst, err)
    print(f"worst: {worst:.3e}")
    return 0 if worst < 1e-5 else 1


if __name__ == "__main__":
    sys.exit(main())
