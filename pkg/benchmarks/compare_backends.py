#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot paths (LOO-1NN predictions and the convolutional forward
pass) under REPCX_BACKEND=numba and REPCX_BACKEND=numpy, checks the results
agree bit for bit, and prints a comparison table.

Usage:
    python benchmarks/compare_backends.py [--loo-n 4000] [--loo-d 512]
                                          [--images 512] [--repeats 3]
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from repcx import backend
from repcx.complexity import loo_predictions
from repcx.lenet import forward_batch
from repcx.tensor_io import LENET_PARAM_SHAPES, LeNetWeights


def _set_backend(name: str) -> None:
    os.environ["REPCX_BACKEND"] = name


def _time(fn, repeats: int):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_loo(n: int, d: int, repeats: int):
    g = np.random.default_rng(0)
    pts = g.random((n, d), dtype=np.float32)
    labels = g.integers(0, 10, n)
    rows = {}
    for name in ("numpy", "numba") if backend.NUMBA_AVAILABLE else ("numpy",):
        _set_backend(name)
        loo_predictions(pts[:64], labels[:64])  # warm up / JIT compile
        rows[name], preds = _time(lambda: loo_predictions(pts, labels), repeats)
        rows.setdefault("preds", {})[name] = preds
    preds = rows.pop("preds")
    agree = len(preds) < 2 or np.array_equal(preds["numpy"], preds["numba"])
    return rows, agree


def bench_forward(n_images: int, repeats: int):
    g = np.random.default_rng(1)
    params = {
        name: g.normal(0, 0.1, shape).astype(np.float32)
        for name, shape in LENET_PARAM_SHAPES
    }
    w = LeNetWeights(params=params, variant="basic")
    images = g.random((n_images, 1, 32, 32), dtype=np.float32)
    rows = {}
    logits_by = {}
    for name in ("numpy", "numba") if backend.NUMBA_AVAILABLE else ("numpy",):
        _set_backend(name)
        forward_batch(w, images[:8], capture=False)  # warm up
        rows[name], (_, logits) = _time(
            lambda: forward_batch(w, images, capture=False), repeats
        )
        logits_by[name] = logits
    agree = len(logits_by) < 2 or np.array_equal(logits_by["numpy"], logits_by["numba"])
    return rows, agree


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--loo-n", type=int, default=4000)
    parser.add_argument("--loo-d", type=int, default=512)
    parser.add_argument("--images", type=int, default=512)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()

    backend.configure_threads(args.threads)
    if not backend.NUMBA_AVAILABLE:
        print("numba not installed; only the numpy fallback will run")

    print(f"LOO-1NN predictions on {args.loo_n} x {args.loo_d} float32")
    loo_rows, loo_agree = bench_loo(args.loo_n, args.loo_d, args.repeats)
    print(f"Forward pass (no capture) on {args.images} images")
    fwd_rows, fwd_agree = bench_forward(args.images, args.repeats)

    print()
    print(f"{'kernel':<18s} {'numpy (s)':>10s} {'numba (s)':>10s} {'speedup':>8s} {'bit-equal':>10s}")
    print("-" * 62)
    for label, rows, agree in (("loo-1nn", loo_rows, loo_agree), ("forward", fwd_rows, fwd_agree)):
        t_np = rows.get("numpy", float("nan"))
        t_nb = rows.get("numba", float("nan"))
        speed = t_np / t_nb if t_nb and t_nb == t_nb else float("nan")
        print(f"{label:<18s} {t_np:>10.3f} {t_nb:>10.3f} {speed:>7.2f}x {str(agree):>10s}")
    if not (loo_agree and fwd_agree):
        raise SystemExit("backend results disagree")


if __name__ == "__main__":
    main()
