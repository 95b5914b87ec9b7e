"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sizes 100 300 1000]

Prints one row per (kernel, size) with the best-of-N wall time of each
backend and the speedup.  Both backends get identical inputs.
"""

import argparse
import sys
import time

import numpy as np

from occo import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    u, v = rng.uniform(0, 1600, n), rng.uniform(0, 1200, n)
    z = rng.uniform(2.0, 4.0, n)
    a, b = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    m = min(n, 256)
    cost = np.linalg.norm(rng.normal(size=(m, 1, 3)) - rng.normal(size=(1, m, 3)), axis=2)
    return {
        "delaunay": lambda k: k.delaunay(u.tolist(), v.tolist(), 1e-9),
        "zbuffer": lambda k: k.zbuffer_visibility(u.tolist(), v.tolist(), z.tolist(), 1e-4, 1e-9),
        "nearest": lambda k: k.nearest(a, b),
        f"auction(m={m})": lambda k: k.auction(cost, 1e-6),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not kernels.has_compiled():
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    print(f"{'kernel':<16}{'n':>6}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for n in args.sizes:
        for name, run in cases(n, np.random.default_rng(args.seed)).items():
            tp = best_of(lambda: run(py), args.repeat)
            tc = best_of(lambda: run(cy), args.repeat)
            print(f"{name:<16}{n:>6}{1e3 * tp:>12.2f}{1e3 * tc:>12.2f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
