"""Compare the compiled subset-sum kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 32] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from miaprune import kernels
from miaprune.theorem import target_grid


def workloads(mod, n, rng):
    w = rng.uniform(-1, 1, size=n)
    h = n // 2
    a = np.sort(mod.subset_sums(w[:h]))
    b = np.sort(mod.subset_sums(w[h:]))
    t = target_grid()
    return {
        "subset_sums": lambda: mod.subset_sums(w[:h]),
        "closest_sum": lambda: mod.closest_sum(a, b, 0.123),
        "best_errors": lambda: mod.best_errors(a, b, t),
        "covers_targets": lambda: mod.covers_targets(a, b, t, 0.05),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.backends()
    print(f"n = {args.n}, backends: {', '.join(backends)}")
    timings = {}
    for name, mod in backends.items():
        for kernel, fn in workloads(mod, args.n, np.random.default_rng(0)).items():
            timings[(name, kernel)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    print(f"{'kernel':16}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for kernel in ("subset_sums", "closest_sum", "best_errors", "covers_targets"):
        row = [timings[(b, kernel)] for b in backends]
        line = f"{kernel:16}" + "".join(f"{t * 1e3:10.3f}ms" for t in row)
        if len(row) > 1:
            line += f"{row[0] / row[1]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
