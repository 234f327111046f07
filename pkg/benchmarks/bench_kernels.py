#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the per-pixel hot paths (matched-filter scores, noise propagation,
k-means assignment and accumulation) on a synthetic workload and prints the
timing ratio. The numpy path is what you get with PLUMEFLUX_NO_NUMBA=1.

Usage: python benchmarks/bench_kernels.py [--pixels 500000] [--bands 36] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from plumeflux.kernels import NUMBA_KERNELS, NUMPY_KERNELS


def time_call(fn, *args, repeats: int = 5) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pixels", type=int, default=500_000)
    parser.add_argument("--bands", type=int, default=36)
    parser.add_argument("--clusters", type=int, default=8)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    X = rng.random((args.pixels, args.bands)) * 10.0
    mu = X.mean(axis=0)
    q = rng.standard_normal(args.bands)
    denom = float(abs(q @ q)) + 1.0
    a = np.full(args.bands, 1e-4)
    c = np.full(args.bands, 1e-4)
    centers = rng.random((args.clusters, args.bands)) * 10.0
    labels = rng.integers(0, args.clusters, size=args.pixels)

    workloads = [
        ("mf_scores", lambda ks: ks.mf_scores(X, mu, q, denom)),
        ("noise_variance", lambda ks: ks.noise_variance(X, a, c, q, denom)),
        ("assign_labels", lambda ks: ks.assign_labels(X, centers)),
        ("cluster_sums", lambda ks: ks.cluster_sums(X, labels, args.clusters)),
    ]

    print(f"workload: {args.pixels} pixels x {args.bands} bands, {args.clusters} clusters")
    header = f"{'kernel':<16}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call in workloads:
        t_np = time_call(lambda: call(NUMPY_KERNELS), repeats=args.repeats)
        if NUMBA_KERNELS is None:
            print(f"{name:<16}{t_np * 1e3:>12.2f}{'n/a':>12}{'n/a':>10}")
            continue
        call(NUMBA_KERNELS)  # JIT warm-up outside the timed region
        t_nb = time_call(lambda: call(NUMBA_KERNELS), repeats=args.repeats)
        print(f"{name:<16}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>10.2f}")
    if NUMBA_KERNELS is None:
        print("numba unavailable; only the numpy path was timed")


if __name__ == "__main__":
    main()
