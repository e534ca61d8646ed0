"""Compiled vs pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--keys 200000] [--repeat 5]

Prints the median wall time of each kernel under both backends and the
speedup. Skips the compiled column when the extension is not built.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from opshard import _pykernels

try:
    from opshard import _kernels
except ImportError:
    _kernels = None


def median_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(keys: int, seed: int):
    rng = np.random.default_rng(seed)
    distinct = [b"key-%d" % i for i in range(keys)]
    # repeated keys exercise the per-call memo as well as the hash itself
    stream = [distinct[i] for i in rng.integers(0, keys, size=keys)]
    weights = [int(w) for w in rng.integers(1, 2000, size=200)]
    cap = sum(weights) // 3
    return {
        "fnv1a64": lambda k: (lambda: [k.fnv1a64(x) for x in distinct]),
        "cluster_ids": lambda k: (lambda: k.cluster_ids(stream, 240)),
        "subset_sum": lambda k: (lambda: k.SubsetSumTable(weights, cap).items_for(
            k.SubsetSumTable(weights, cap).best_at_most(cap // 2))),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--keys", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"{'kernel':<14}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, make in cases(args.keys, args.seed).items():
        py = median_time(make(_pykernels), args.repeat)
        if _kernels is None:
            print(f"{name:<14}{py:>12.4f}{'n/a':>12}{'':>10}")
            continue
        cy = median_time(make(_kernels), args.repeat)
        print(f"{name:<14}{py:>12.4f}{cy:>12.4f}{py / cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
