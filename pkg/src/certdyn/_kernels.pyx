# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice kernels: all-pairs distances, set distances, greedy colouring."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, INFINITY

cnp.import_array()


def graph_distances(Py_ssize_t n, const long[:] indptr, const long[:] indices):
    """All-pairs shortest-path edge counts by BFS; -1 marks unreachable pairs."""
    out = np.full((n, n), -1, dtype=np.int64)
    cdef long[:, :] d = out
    cdef long[:] queue = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t src, head, tail, u, k, w
    for src in range(n):
        d[src, src] = 0
        queue[0] = src
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            for k in range(indptr[u], indptr[u + 1]):
                w = indices[k]
                if d[src, w] < 0:
                    d[src, w] = d[src, u] + 1
                    queue[tail] = w
                    tail += 1
    return out


def pnorm_distances(const long[:, :] coords, double p):
    """Pairwise p-norm distances between integer coordinate vectors (p may be inf)."""
    cdef Py_ssize_t n = coords.shape[0], eta = coords.shape[1]
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, :] d = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(eta):
                diff = fabs(<double>(coords[i, k] - coords[j, k]))
                if p == INFINITY:
                    if diff > acc:
                        acc = diff
                elif p == 1.0:
                    acc += diff
                else:
                    acc += pow(diff, p)
            if p != INFINITY and p != 1.0:
                acc = pow(acc, 1.0 / p)
            d[i, j] = acc
            d[j, i] = acc
    return out


def set_distances(const double[:, :] dist, const long[:] indptr, const long[:] members):
    """Distance from every site to every member set, shape (n_sites, n_sets)."""
    cdef Py_ssize_t n = dist.shape[0], m = indptr.shape[0] - 1
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, :] o = out
    cdef Py_ssize_t x, z, k
    cdef double best
    for x in range(n):
        for z in range(m):
            best = INFINITY
            for k in range(indptr[z], indptr[z + 1]):
                if dist[x, members[k]] < best:
                    best = dist[x, members[k]]
            o[x, z] = best
    return out


def greedy_coloring(const double[:, :] dist, double radius, double tol):
    """Greedy colouring in index order of the graph with edges 0 < d(x, y) < radius.

    Colours start at 1.
    """
    cdef Py_ssize_t n = dist.shape[0]
    colors = np.zeros(n, dtype=np.int64)
    cdef long[:] c = colors
    cdef char[:] used = np.zeros(n + 2, dtype=np.int8)
    cdef Py_ssize_t x, y, col
    for x in range(n):
        for y in range(x):
            if dist[x, y] > tol and dist[x, y] < radius - tol:
                used[c[y]] = 1
        col = 1
        while used[col]:
            col += 1
        c[x] = col
        for y in range(x):
            used[c[y]] = 0
    return colors
