"""Time the compiled routing kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Both backends get the same
inputs; results are checked for agreement before timings are printed.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from lrpgen.kernels import _pykernels as py

try:
    from lrpgen.kernels import _ckernels as cy
except ImportError:  # extension not built
    cy = None


def cases(rng: np.random.Generator):
    xy = rng.uniform(size=(40, 2))
    d = np.sqrt(((xy[:, None] - xy[None]) ** 2).sum(-1))
    d = np.ascontiguousarray(d)
    nodes9 = list(range(1, 10))
    demand = np.concatenate([[0.0, 0.0], rng.uniform(0, 10, 38)])
    tour, _ = py.subset_tours(d, 0, nodes9)
    load = np.zeros(1 << 9)
    for j in range(9):
        load[1 << j:2 << j] = load[:1 << j] + demand[j + 2]
    perm = list(range(2, 40))
    stops = list(rng.permutation(np.arange(2, 22)))
    return {
        "route_length": lambda k: k.route_length(d, 0, stops),
        "subset_tours(k=9)": lambda k: k.subset_tours(d, 0, nodes9),
        "subset_paths(k=7)": lambda k: k.subset_paths(d, list(range(1, 8))),
        "partition_dp(k=9)": lambda k: k.partition_dp(tour, load, 20.0, 0.3),
        "split_tour(n=38)": lambda k: k.split_tour(d, perm, demand, 30.0, [0, 1], 0.3),
        "two_opt(n=20)": lambda k: k.two_opt(d, 0, stops),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12, atol=1e-12)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels not built; only the Python backend is available")
        return 1
    print(f"{'kernel':22s}{'python (ms)':>14s}{'cython (ms)':>14s}{'speed-up':>10s}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        if not _same(fn(py), fn(cy)):
            print(f"{name}: backends disagree")
            return 1
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:22s}{tp:14.3f}{tc:14.3f}{tp / tc:10.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
