"""Benchmark the compiled metric kernels against the pure-Python fallback.

Workloads mirror real evaluation shapes: ROUGE-L LCS over caption-length
token sequences (the per-pair hot loop when scoring tens of thousands of
test figures) and rank-pair counting for Kendall tau.

Usage: python benchmarks/bench_kernels.py [--pairs N] [--tokens N] [--ranks N]
"""

from __future__ import annotations

import argparse
import random
import time
from array import array

from mlbcap import _pykernels

try:
    from mlbcap import _ckernels
except ImportError:
    _ckernels = None


def time_fn(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_lcs(impl, pairs):
    def run():
        for a, b in pairs:
            impl.lcs_length_ids(a, b)

    return time_fn(run)


def bench_ranks(impl, x, y):
    return time_fn(lambda: impl.rank_pair_counts(x, y))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=2000, help="LCS pairs")
    parser.add_argument("--tokens", type=int, default=60, help="max tokens per side")
    parser.add_argument("--ranks", type=int, default=4000, help="rank vector length")
    args = parser.parse_args()

    rng = random.Random(0)
    pairs = [
        (
            array("l", [rng.randrange(50) for _ in range(rng.randint(5, args.tokens))]),
            array("l", [rng.randrange(50) for _ in range(rng.randint(5, args.tokens))]),
        )
        for _ in range(args.pairs)
    ]
    x = array("d", [rng.uniform(0, 6) for _ in range(args.ranks)])
    y = array("d", [rng.uniform(0, 6) for _ in range(args.ranks)])

    rows = []
    py_lcs = bench_lcs(_pykernels, pairs)
    rows.append(("lcs_length_ids", f"{args.pairs} pairs <= {args.tokens} tokens", "pure-python", py_lcs, 1.0))
    if _ckernels is not None:
        c_lcs = bench_lcs(_ckernels, pairs)
        rows.append(("lcs_length_ids", "", "compiled", c_lcs, py_lcs / c_lcs))

    py_ranks = bench_ranks(_pykernels, x, y)
    rows.append(("rank_pair_counts", f"n={args.ranks}", "pure-python", py_ranks, 1.0))
    if _ckernels is not None:
        c_ranks = bench_ranks(_ckernels, x, y)
        rows.append(("rank_pair_counts", "", "compiled", c_ranks, py_ranks / c_ranks))

    print(f"{'kernel':<18} {'workload':<30} {'impl':<12} {'seconds':>10} {'speedup':>9}")
    for kernel, workload, impl, seconds, speedup in rows:
        print(f"{kernel:<18} {workload:<30} {impl:<12} {seconds:>10.4f} {speedup:>8.1f}x")
    if _ckernels is None:
        print("\ncompiled extension not built; showing pure-python only")


if __name__ == "__main__":
    main()
