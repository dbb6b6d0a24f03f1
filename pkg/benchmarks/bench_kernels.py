"""Benchmark the compiled nearest-neighbor kernel against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 64,256,1024] [--dims 2,8]
"""
import argparse
import time

import numpy as np

from dyncorr import _core_py, kernels


def bench(fn, a, b, min_time=0.2):
    # warm up, then repeat until min_time elapsed for a stable estimate
    fn(a, b)
    reps = 0
    start = time.perf_counter()
    while True:
        fn(a, b)
        reps += 1
        elapsed = time.perf_counter() - start
        if elapsed >= min_time:
            return elapsed / reps


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="64,256,1024,4096")
    parser.add_argument("--dims", default="2,8")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    dims = [int(d) for d in args.dims.split(",")]

    if not kernels.HAVE_COMPILED:
        print("compiled kernel not available; benchmarking fallback only")
    rng = np.random.default_rng(args.seed)
    header = f"{'n':>6} {'dim':>4} {'fallback':>12} {'compiled':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for d in dims:
        for n in sizes:
            a = np.ascontiguousarray(rng.normal(size=(n, d)))
            b = np.ascontiguousarray(rng.normal(size=(n, d)))
            t_py = bench(_core_py.nearest_neighbor_match, a, b)
            if kernels.HAVE_COMPILED:
                t_c = bench(kernels._core.nearest_neighbor_match, a, b)
                print(f"{n:>6} {d:>4} {t_py * 1e3:>10.3f}ms {t_c * 1e3:>10.3f}ms "
                      f"{t_py / t_c:>7.2f}x")
            else:
                print(f"{n:>6} {d:>4} {t_py * 1e3:>10.3f}ms {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
