"""Compare the compiled kernel backend against the pure numpy fallback.

Two views:
  * raw kernel latency across sizes (single conv forward calls);
  * end-to-end streaming generation throughput, which is where the
    compiled backend earns its keep (many tiny per-step convolutions).

Run:  python benchmarks/kernel_bench.py [--steps N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from causalseq.kernels import get_backend
from causalseq.models import ModelConfig, build_model
from causalseq.streaming import init_stream


def time_call(fn, *args, repeat=200):
    fn(*args)  # warm
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def kernel_table():
    rng = np.random.default_rng(0)
    cases = [
        ("step-size conv   (64x64x3, T=3)", (64, 64, 3, 3, 1)),
        ("step-size conv (128x128x5, T=5)", (128, 128, 5, 5, 1)),
        ("batch conv     (64x64x3, T=256)", (64, 64, 3, 256, 1)),
        ("batch conv   (128x128x5, T=512)", (128, 128, 5, 512, 1)),
        ("strided conv  (96x96x5, T=512, s=2)", (96, 96, 5, 512, 2)),
    ]
    print(f"{'case':38s} {'python':>10s} {'compiled':>10s} {'ratio':>7s}")
    for name, (co, ci, w, t, s) in cases:
        x = rng.standard_normal((ci, t)).astype(np.float32)
        k = rng.standard_normal((co, ci, w)).astype(np.float32)
        b = rng.standard_normal(co).astype(np.float32)
        times = {}
        for backend in ("python", "compiled"):
            mod = get_backend(backend)
            times[backend] = time_call(mod.conv1d_forward, x, k, b, s, 1)
        ratio = times["python"] / times["compiled"]
        print(f"{name:38s} {times['python']*1e6:9.1f}us {times['compiled']*1e6:9.1f}us "
              f"{ratio:6.2f}x")


def stream_table(n_steps: int):
    import causalseq.streaming as streaming

    cfg = ModelConfig(variant="plain", levels=8, width=2, stride=2, hidden=96,
                      in_channels=2, out_channels=2, io_mode="linear")
    graph = build_model(cfg)
    rng = np.random.default_rng(0)
    ctx = rng.standard_normal((2, graph.min_input_length() + 4)).astype(np.float32)
    frames = [rng.standard_normal(2).astype(np.float32) for _ in range(256)]
    print(f"\nstreaming throughput (plain L=8 H=96, {n_steps} steps):")
    for backend in ("python", "compiled"):
        streaming.kernels = get_backend(backend)  # swap the kernel module
        state, _ = init_stream(graph, ctx)
        for i in range(64):
            state.step(frames[i % 256])
        t0 = time.perf_counter()
        for i in range(n_steps):
            state.step(frames[i % 256])
        rate = n_steps / (time.perf_counter() - t0)
        print(f"  {backend:9s} {rate:9.0f} samples/sec")
    import causalseq.kernels as kernels_mod

    streaming.kernels = kernels_mod  # restore


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    kernel_table()
    stream_table(args.steps)


if __name__ == "__main__":
    main()
