"""PEPS and PEPO on arbitrary connected graphs.

A PEPS assigns to each vertex ``x`` a tensor with one physical index followed
by one bond index per incident edge, in the vertex's fixed edge order
(neighbours in ascending id). A PEPO has two physical indices (out, in).
Contracting all bond indices gives the represented tensor or operator; this is
only feasible for small graphs and serves as an oracle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exact import check_dim, decode_complex, embed, encode_complex


class GraphError(ValueError):
    """Graph is not simple and connected, or two graphs differ."""


def _edge(x, y) -> tuple:
    return (x, y) if x < y else (y, x)


@dataclass
class PepsGraph:
    """Vertices, edges with bond dimensions and the per-vertex edge order."""

    vertices: tuple
    bond_dims: dict
    order: dict = field(init=False)

    def __post_init__(self):
        self.vertices = tuple(sorted(self.vertices))
        vs = set(self.vertices)
        if len(vs) != len(self.vertices):
            raise GraphError("duplicate vertices")
        dims = {}
        for e, D in self.bond_dims.items():
            x, y = tuple(e)
            if x == y:
                raise GraphError(f"self-loop at {x}")
            if x not in vs or y not in vs:
                raise GraphError(f"edge {e} has an unknown endpoint")
            if int(D) < 1:
                raise GraphError(f"bond dimension of {e} must be at least 1")
            dims[_edge(x, y)] = int(D)
        self.bond_dims = dims
        nb = {x: [] for x in self.vertices}
        for x, y in dims:
            nb[x].append(y)
            nb[y].append(x)
        self.order = {x: tuple(sorted(n)) for x, n in nb.items()}
        if self.vertices and len(self._reach(self.vertices[0])) != len(self.vertices):
            raise GraphError("graph is not connected")

    @classmethod
    def from_edges(cls, vertices, edges, D: int = 1) -> "PepsGraph":
        return cls(tuple(vertices), {_edge(*e): D for e in edges})

    def _reach(self, root) -> set:
        seen, stack = {root}, [root]
        while stack:
            x = stack.pop()
            for y in self.order[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return seen

    @property
    def edges(self) -> list:
        return sorted(self.bond_dims)

    def D(self, x, y) -> int:
        return self.bond_dims[_edge(x, y)]

    def bond_shape(self, x) -> tuple:
        return tuple(self.D(x, y) for y in self.order[x])

    def with_dims(self, dims: dict) -> "PepsGraph":
        return PepsGraph(self.vertices, {e: dims.get(e, 1) for e in self.bond_dims})

    def same_shape(self, other: "PepsGraph") -> bool:
        return self.vertices == other.vertices and set(self.bond_dims) == set(other.bond_dims)

    def induced_connected(self, sites) -> bool:
        sites = set(sites)
        if not sites:
            return False
        root = min(sites)
        seen, stack = {root}, [root]
        while stack:
            x = stack.pop()
            for y in self.order[x]:
                if y in sites and y not in seen:
                    seen.add(y)
                    stack.append(y)
        return seen == sites

    def subgraph(self, sites) -> "PepsGraph":
        sites = set(sites)
        return PepsGraph(tuple(sites), {e: 1 for e in self.bond_dims if set(e) <= sites})

    def dfs(self, root=None) -> tuple:
        """First-visit order and tree parent map; neighbours visited in ascending id."""
        root = self.vertices[0] if root is None else root
        order, parent = [], {root: None}

        def visit(x):
            order.append(x)
            for y in self.order[x]:
                if y not in parent:
                    parent[y] = x
                    visit(y)

        visit(root)
        return tuple(order), parent

    def to_dict(self) -> dict:
        return {"vertices": list(self.vertices),
                "edges": [[x, y, D] for (x, y), D in sorted(self.bond_dims.items())]}

    @classmethod
    def from_dict(cls, d: dict) -> "PepsGraph":
        return cls(tuple(d["vertices"]), {(x, y): D for x, y, D in d["edges"]})


@dataclass
class Peps:
    """Per-vertex tensors of shape ``(d_x, *bonds)``."""

    graph: PepsGraph
    tensors: dict
    n_phys: int = 1

    def __post_init__(self):
        for x in self.graph.vertices:
            T = np.asarray(self.tensors[x])
            if T.shape[self.n_phys:] != self.graph.bond_shape(x):
                raise GraphError(f"tensor at {x} has bond shape {T.shape[self.n_phys:]}, "
                                 f"graph needs {self.graph.bond_shape(x)}")
            self.tensors[x] = T

    def phys_dims(self) -> dict:
        return {x: self.tensors[x].shape[: self.n_phys] for x in self.graph.vertices}

    def max_bond(self) -> int:
        return max(self.graph.bond_dims.values(), default=1)

    def to_dict(self) -> dict:
        return {"kind": "pepo" if self.n_phys == 2 else "peps", "graph": self.graph.to_dict(),
                "tensors": {str(x): encode_complex(T) for x, T in self.tensors.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "Peps":
        g = PepsGraph.from_dict(d["graph"])
        tensors = {x: decode_complex(d["tensors"][str(x)]) for x in g.vertices}
        return (Pepo if d.get("kind") == "pepo" else Peps)(g, tensors)


@dataclass
class Pepo(Peps):
    """Per-vertex tensors of shape ``(d_out, d_in, *bonds)``."""

    n_phys: int = 2


def _phys_size(p: Peps) -> int:
    return int(np.prod([int(np.prod(s)) for s in p.phys_dims().values()]))


def contract(p: Peps, method: str = "einsum") -> np.ndarray:
    """Sum over all bond indices.

    A PEPS yields a tensor with one index per vertex (ascending id); a PEPO
    yields the operator as a matrix. ``method`` is ``"einsum"`` (optimized
    pairwise order) or ``"sequential"`` (absorb vertices in ascending id).
    """
    size = _phys_size(p)
    check_dim(size if p.n_phys == 1 else int(math.isqrt(size)))
    g = p.graph
    if method == "einsum":
        out = _contract_einsum(p)
    elif method == "sequential":
        out = _contract_sequential(p)
    else:
        raise ValueError(f"unknown contraction method {method!r}")
    if p.n_phys == 2:
        k = len(g.vertices)
        dout = [p.tensors[x].shape[0] for x in g.vertices]
        perm = list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2))
        D = int(np.prod(dout))
        return out.transpose(perm).reshape(D, -1)
    return out


def _contract_einsum(p: Peps) -> np.ndarray:
    g = p.graph
    label = itertools.count()
    edge_lab = {e: next(label) for e in g.edges}
    phys_lab = {x: [next(label) for _ in range(p.n_phys)] for x in g.vertices}
    args, out = [], []
    for x in g.vertices:
        args += [p.tensors[x], phys_lab[x] + [edge_lab[_edge(x, y)] for y in g.order[x]]]
        out += phys_lab[x]
    return np.einsum(*args, out, optimize="greedy")


def _contract_sequential(p: Peps) -> np.ndarray:
    g = p.graph
    T = np.ones((), dtype=complex)
    labels: list = []  # ("p", x, i) or ("e", edge)
    for x in g.vertices:
        A = p.tensors[x]
        A_lab = [("p", x, i) for i in range(p.n_phys)] + [("e", _edge(x, y)) for y in g.order[x]]
        shared = [l for l in A_lab if l[0] == "e" and l in labels]
        T = np.tensordot(T, A, axes=([labels.index(l) for l in shared], [A_lab.index(l) for l in shared]))
        labels = [l for l in labels if l not in shared] + [l for l in A_lab if l not in shared]
    want = [("p", x, i) for x in g.vertices for i in range(p.n_phys)]
    return T.transpose([labels.index(l) for l in want])


def pepo_product(G: Pepo, H: Pepo) -> Pepo:
    """PEPO of the operator product ``G H``; bond dimensions multiply per edge."""
    if not G.graph.same_shape(H.graph):
        raise GraphError("PEPO graphs differ")
    g = G.graph
    dims = {e: G.graph.bond_dims[e] * H.graph.bond_dims[e] for e in g.edges}
    F = g.with_dims(dims)
    tensors = {}
    for x in g.vertices:
        A, B = G.tensors[x], H.tensors[x]
        if A.shape[1] != B.shape[0]:
            raise GraphError(f"physical dimensions differ at {x}")
        z = len(g.order[x])
        # axes: A (o, m, a_1..a_z), B (m, i, b_1..b_z) -> (o, i, a_1, b_1, ..., a_z, b_z)
        C = np.tensordot(A, B, axes=([1], [0]))
        perm = [0, 1 + z] + [ax for k in range(z) for ax in (1 + k, 2 + z + k)]
        C = C.transpose(perm)
        tensors[x] = C.reshape(C.shape[:2] + tuple(A.shape[2 + k] * B.shape[2 + k] for k in range(z)))
    return Pepo(F, tensors)


def identity_pepo(graph: PepsGraph, d) -> Pepo:
    g = graph.with_dims({})
    return Pepo(g, {x: np.eye(d).reshape((d, d) + (1,) * len(g.order[x])).astype(complex)
                    for x in g.vertices})


def tensor_to_peps(t: np.ndarray, graph: PepsGraph, rtol: float = 0.0) -> Peps:
    """Exact PEPS of ``t`` (one index per vertex, ascending id) on ``graph``.

    An MPS is built by successive SVDs along the depth-first first-visit order.
    The bond between consecutive visits is routed along the spanning-tree path
    joining them; each tree edge carries at most two such bonds and non-tree
    edges get bond dimension one. ``rtol > 0`` drops singular values below
    ``rtol`` times the largest one.
    """
    t = np.asarray(t)
    verts = graph.vertices
    if t.ndim != len(verts):
        raise GraphError("tensor needs one index per vertex")
    order, parent = graph.dfs()
    pos = {x: i for i, x in enumerate(verts)}
    T = t.transpose([pos[x] for x in order])
    cores = _mps(T, rtol)
    chi = [c.shape[2] for c in cores[:-1]]

    # load[e]: MPS bonds routed through tree edge e
    load = {e: [] for e in graph.edges}
    tensors = {}
    for b in range(len(order) - 1):
        path = _tree_path(order[b], order[b + 1], parent)
        for u, w in zip(path, path[1:]):
            load[_edge(u, w)].append(b)
    for e, bs in load.items():
        if len(bs) > 2:
            raise AssertionError(f"edge {e} carries {len(bs)} MPS bonds")
    for k, x in enumerate(order):
        core = cores[k].transpose(1, 0, 2)  # (phys, left, right)
        labels = [("L", k - 1), ("R", k)]
        for b in range(len(order) - 1):
            path = _tree_path(order[b], order[b + 1], parent)
            if x in path[1:-1]:
                core = np.multiply.outer(core, np.eye(chi[b]))
                i = path.index(x)
                labels += [("in", b, _edge(path[i - 1], x)), ("out", b, _edge(x, path[i + 1]))]
        # resolve the edge each bond leg uses
        leg_edge = []
        for lab in labels:
            if lab[0] == "L":
                b = lab[1]
                leg_edge.append((_edge(*_tree_path(order[b], x, parent)[-2:]) if b >= 0 else None, b))
            elif lab[0] == "R":
                b = lab[1]
                leg_edge.append((_edge(*_tree_path(x, order[b + 1], parent)[:2])
                                 if b < len(order) - 1 else None, b))
            else:
                leg_edge.append((lab[2], lab[1]))
        # group legs per incident edge (ascending neighbour), bonds ascending within an edge
        groups = []
        for y in graph.order[x]:
            e = _edge(x, y)
            groups.append(sorted([i for i, (ee, b) in enumerate(leg_edge) if ee == e],
                                 key=lambda i: leg_edge[i][1]))
        dangling = [i for i, (ee, _) in enumerate(leg_edge) if ee is None]
        shape = [core.shape[0]] + [int(np.prod([core.shape[1 + i] for i in grp])) if grp else 1
                                   for grp in groups]
        perm = [0] + [1 + i for grp in groups for i in grp] + [1 + i for i in dangling]
        tensors[x] = core.transpose(perm).reshape(shape)
    dims = {e: int(np.prod([chi[b] for b in bs])) if bs else 1 for e, bs in load.items()}
    return Peps(graph.with_dims(dims), tensors)


def _mps(T: np.ndarray, rtol: float) -> list:
    """Left-canonical MPS cores ``(left, phys, right)`` with boundary bonds of size one."""
    shape = T.shape
    cores = []
    rest = T.reshape(1, -1)
    left = 1
    for k in range(len(shape) - 1):
        M = rest.reshape(left * shape[k], -1)
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
        keep = len(s)
        if rtol > 0 and s.size and s[0] > 0:
            keep = max(1, int(np.sum(s > rtol * s[0])))
        cores.append(U[:, :keep].reshape(left, shape[k], keep))
        rest = s[:keep, None] * Vh[:keep]
        left = keep
    cores.append(rest.reshape(left, shape[-1], 1))
    return cores


def _tree_path(x, y, parent) -> list:
    """Vertices on the spanning-tree path from ``x`` to ``y``."""
    anc_x = [x]
    while parent[anc_x[-1]] is not None:
        anc_x.append(parent[anc_x[-1]])
    pos = {v: i for i, v in enumerate(anc_x)}
    up = [y]
    while up[-1] not in pos:
        up.append(parent[up[-1]])
    meet = up[-1]
    return anc_x[: pos[meet] + 1] + up[-2::-1]


def operator_to_pepo(op: np.ndarray, sites: Sequence, graph: PepsGraph, d: int) -> Pepo:
    """PEPO on ``graph`` of ``op`` acting on ``sites`` (identity elsewhere).

    The operator is converted on the subgraph induced by ``sites``, which must
    be connected; edges leaving the support get bond dimension one.
    """
    sites = tuple(sorted(sites))
    if not graph.induced_connected(sites):
        raise GraphError(f"gate support {sites} is not connected in the graph")
    k = len(sites)
    T = np.asarray(op).reshape((d,) * (2 * k))
    T = T.transpose([ax for j in range(k) for ax in (j, k + j)]).reshape((d * d,) * k)
    sub = graph.subgraph(sites)
    local = tensor_to_peps(T, sub)
    dims = {e: local.graph.bond_dims.get(e, 1) for e in graph.edges}
    g = graph.with_dims(dims)
    tensors = {}
    for x in graph.vertices:
        if x in local.tensors:
            A = local.tensors[x]
            A = A.reshape((d, d) + A.shape[1:])
            # insert size-one legs for edges leaving the support, keeping ascending order
            sub_nb = list(sub.order[x])
            shape = [d, d] + [A.shape[2 + sub_nb.index(y)] if y in sub_nb else 1
                              for y in graph.order[x]]
            perm_src = [2 + sub_nb.index(y) for y in graph.order[x] if y in sub_nb]
            A = A.transpose([0, 1] + perm_src) if perm_src else A
            tensors[x] = A.reshape(shape)
        else:
            tensors[x] = np.eye(d, dtype=complex).reshape((d, d) + (1,) * len(graph.order[x]))
    return Pepo(g, tensors)


def circuit_to_pepo_bound(circuit: Sequence, graph: PepsGraph, d: int = 2,
                          materialize: bool = False) -> dict:
    """Bond-dimension bounds for the PEPO of ``U = g_m ... g_1``.

    Per edge: the product over gates whose support contains both endpoints of
    ``d^(2 |support|)``. Globally: ``d^(2 K L)`` with ``K`` the largest gate
    support and ``L`` the largest number of gates acting on one site. With
    ``materialize`` the PEPO is built gate by gate and its contraction is
    compared with the dense circuit product.
    """
    K, per_site = 0, {x: 0 for x in graph.vertices}
    per_edge = {e: 1 for e in graph.edges}
    for support, _ in circuit:
        support = set(support)
        if not graph.induced_connected(support):
            raise GraphError(f"gate support {sorted(support)} is not connected in the graph")
        K = max(K, len(support))
        for x in support:
            per_site[x] += 1
        for e in graph.edges:
            if set(e) <= support:
                per_edge[e] *= d ** (2 * len(support))
    L = max(per_site.values(), default=0)
    out = {"per_edge_bound": per_edge, "global_bound": d ** (2 * K * L), "K": K, "L": L}
    if materialize:
        P = identity_pepo(graph, d)
        dims = {x: d for x in graph.vertices}
        U = np.eye(d ** len(graph.vertices), dtype=complex)
        for support, gate in circuit:
            P = pepo_product(operator_to_pepo(gate, support, graph, d), P)
            U = embed(gate, tuple(sorted(support)), graph.vertices, dims) @ U
        dense = contract(P)
        out["pepo"] = P
        out["materialized_dims"] = dict(P.graph.bond_dims)
        out["dense_error"] = float(np.linalg.norm(dense - U, 2))
        out["within_bound"] = all(P.graph.bond_dims[e] <= per_edge[e] for e in graph.edges)
    return out
