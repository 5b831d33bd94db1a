"""Time the compiled lattice kernels against the pure-Python fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat 3]``. Prints one row per
kernel and lattice size with both timings and the speedup.
"""
import argparse
import timeit

import numpy as np

from certdyn import _kernels_py, kernels
from certdyn.lattice import Lattice


def cases(side):
    lat = Lattice.hypercube(side, 2)
    n = lat.n
    coords = np.array([lat.coords(x) for x in lat.sites])
    # nearest-neighbour adjacency in CSR form
    nbrs = [np.flatnonzero(lat.dist[i] == 1) for i in range(n)]
    indptr = np.concatenate([[0], np.cumsum([len(v) for v in nbrs])])
    indices = np.concatenate(nbrs)
    sets = [list(range(k, min(k + 3, n))) for k in range(0, n, 3)]
    return n, {
        "graph_distances": lambda impl: kernels.graph_distances(n, indptr, indices, impl=impl),
        "pnorm_distances": lambda impl: kernels.pnorm_distances(coords, 2.0, impl=impl),
        "set_distances": lambda impl: kernels.set_distances(lat.dist, sets, impl=impl),
        "greedy_coloring": lambda impl: kernels.greedy_coloring(lat.dist, 3.0, impl=impl),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sides", type=int, nargs="+", default=[8, 16, 24])
    args = ap.parse_args(argv)
    if kernels.BACKEND != "cython":
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    print(f"{'kernel':<18}{'sites':>7}{'cython [ms]':>14}{'python [ms]':>14}{'speedup':>10}")
    for side in args.sides:
        n, funcs = cases(side)
        for name, f in funcs.items():
            a, b = f(kernels._impl), f(_kernels_py)
            assert np.array_equal(a, b), name
            tc = min(timeit.repeat(lambda: f(kernels._impl), number=1, repeat=args.repeat))
            tp = min(timeit.repeat(lambda: f(_kernels_py), number=1, repeat=args.repeat))
            print(f"{name:<18}{n:>7}{tc * 1e3:>14.2f}{tp * 1e3:>14.1f}{tp / tc:>10.0f}x")


if __name__ == "__main__":
    main()
