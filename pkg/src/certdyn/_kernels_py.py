"""Pure-Python implementations of the lattice kernels.

Same signatures and results as the compiled ``_kernels`` module; used when the
extension is not built or ``CERTDYN_PURE_PYTHON`` is set.
"""
from collections import deque

import numpy as np


def graph_distances(n, indptr, indices):
    out = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        out[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for k in range(indptr[u], indptr[u + 1]):
                w = indices[k]
                if out[src, w] < 0:
                    out[src, w] = out[src, u] + 1
                    queue.append(w)
    return out


def pnorm_distances(coords, p):
    coords = np.asarray(coords)
    n = coords.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            diff = [abs(int(a) - int(b)) for a, b in zip(coords[i], coords[j])]
            if p == np.inf:
                val = float(max(diff, default=0))
            elif p == 1.0:
                val = float(sum(diff))
            else:
                val = sum(x**p for x in diff) ** (1.0 / p)
            out[i, j] = out[j, i] = val
    return out


def set_distances(dist, indptr, members):
    n = dist.shape[0]
    m = len(indptr) - 1
    out = np.empty((n, m), dtype=np.float64)
    for x in range(n):
        row = dist[x]
        for z in range(m):
            idx = members[indptr[z]:indptr[z + 1]]
            out[x, z] = min((row[k] for k in idx), default=np.inf)
    return out


def greedy_coloring(dist, radius, tol):
    n = dist.shape[0]
    colors = np.zeros(n, dtype=np.int64)
    for x in range(n):
        taken = {colors[y] for y in range(x) if tol < dist[x, y] < radius - tol}
        col = 1
        while col in taken:
            col += 1
        colors[x] = col
    return colors
