"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from woevae import _pykernels

try:
    from woevae import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback can run")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'python (s)':>12}{'compiled (s)':>14}{'speedup':>10}  same")
    cases = []
    for m in (500, 1000, 2000):
        P = rng.normal(size=(m, 2))
        cases.append((f"ward_two_clusters m={m}", "ward_two_clusters", (P,)))
    for n in (20_000, 200_000):
        P = rng.normal(size=(n, 2))
        C = rng.normal(size=(8, 2))
        cases.append((f"nearest_centroid n={n}", "nearest_centroid", (P, C)))
    for label, name, a in cases:
        tp, op = best_of(lambda: getattr(_pykernels, name)(*a), args.repeat)
        if _kernels is None:
            print(f"{label:<28}{tp:>12.4f}{'-':>14}{'-':>10}")
            continue
        tc, oc = best_of(lambda: getattr(_kernels, name)(*a), args.repeat)
        print(f"{label:<28}{tp:>12.4f}{tc:>14.4f}{tp / tc:>9.1f}x  {np.array_equal(op, oc)}")


if __name__ == "__main__":
    main()
