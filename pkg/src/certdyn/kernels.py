"""Kernel dispatch: compiled extension when available, pure Python otherwise.

Set ``CERTDYN_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("CERTDYN_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def _as_long(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def graph_distances(n, indptr, indices, impl=None):
    impl = impl or _impl
    return impl.graph_distances(int(n), _as_long(indptr), _as_long(indices))


def pnorm_distances(coords, p, impl=None):
    impl = impl or _impl
    return impl.pnorm_distances(_as_long(coords), float(p))


def set_distances(dist, sets, impl=None):
    """Distance from each site index to each index set in ``sets``."""
    impl = impl or _impl
    sets = [np.asarray(sorted(s), dtype=np.int64) for s in sets]
    indptr = np.zeros(len(sets) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(s) for s in sets])
    members = np.concatenate(sets) if sets else np.zeros(0, dtype=np.int64)
    return impl.set_distances(np.ascontiguousarray(dist, dtype=np.float64), indptr, _as_long(members))


def greedy_coloring(dist, radius, tol=1e-12, impl=None):
    impl = impl or _impl
    return impl.greedy_coloring(np.ascontiguousarray(dist, dtype=np.float64), float(radius), float(tol))
