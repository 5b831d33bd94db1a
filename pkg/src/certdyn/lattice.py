"""Finite lattices with a metric, and the region algebra built on top of them.

Two geometries are supported:

* graph lattices, where the distance is the shortest-path edge count of a
  connected simple graph (site ids are arbitrary integers, chains use 1..n);
* hypercubes ``[1:L]^eta`` with a p-norm metric (Chebyshev by default). Site
  ids are row-major with the first coordinate fastest:
  ``id = sum_i (x_i - 1) L^(i-1)``.

Regions are plain ``frozenset`` objects of site ids so equality is structural.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels

TOL = 1e-12


class LatticeError(ValueError):
    """Invalid lattice, region or cube."""


Region = frozenset


def region(sites: Iterable[int]) -> frozenset:
    """Canonical region value from any iterable of site ids."""
    return frozenset(int(s) for s in sites)


@dataclass(frozen=True)
class Cube:
    """Integer box ``C(lower, upper)``; empty when some ``lower_i > upper_i``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise LatticeError("cube corners have different dimensions")
        object.__setattr__(self, "lower", tuple(int(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(int(v) for v in self.upper))

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def is_empty(self) -> bool:
        return any(lo > hi for lo, hi in zip(self.lower, self.upper))

    def enlarge(self, r: int, L: int | None = None) -> "Cube":
        """``C(x - r v, y + r v)``, clipped to ``[1:L]`` when ``L`` is given."""
        if r < 0:
            raise LatticeError("enlargement must be non-negative")
        lo = [v - r for v in self.lower]
        hi = [v + r for v in self.upper]
        if L is not None:
            lo = [max(1, v) for v in lo]
            hi = [min(L, v) for v in hi]
        return Cube(tuple(lo), tuple(hi))

    def intersect(self, other: "Cube") -> "Cube":
        if other.dimension != self.dimension:
            raise LatticeError("cube dimension mismatch")
        lo = tuple(max(a, c) for a, c in zip(self.lower, other.lower))
        hi = tuple(min(b, d) for b, d in zip(self.upper, other.upper))
        return Cube(lo, hi)

    def contains(self, coords: Sequence[int]) -> bool:
        return all(lo <= c <= hi for c, lo, hi in zip(coords, self.lower, self.upper))


def cube_ops(cube: Cube, other: Cube, r: int, L: int | None = None) -> dict:
    """Enlarged cube and componentwise intersection."""
    return {"enlarged": cube.enlarge(r, L), "intersection": cube.intersect(other)}


class Lattice:
    """Finite metric lattice.

    Use the constructors :meth:`graph`, :meth:`chain`, :meth:`grid` and
    :meth:`hypercube` rather than ``__init__``. Instances are immutable; all
    distances are precomputed into a dense matrix indexed by site position in
    ascending id order.
    """

    def __init__(self, sites, dist, geometry, *, edges=None, L=None, eta=None, p=math.inf,
                 coords=None, shape=None):
        self.sites = tuple(sites)
        self.n = len(self.sites)
        self.index = {s: i for i, s in enumerate(self.sites)}
        self.dist = np.asarray(dist, dtype=np.float64)
        self.dist.setflags(write=False)
        self.geometry = geometry
        self.edges = edges
        self.L = L
        self.eta = eta
        self.p = p
        self.shape = shape
        self._coords = coords
        self.all = frozenset(self.sites)

    # constructors

    @classmethod
    def graph(cls, edges, sites=None, shape=None) -> "Lattice":
        edge_set = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise LatticeError(f"self-loop at site {u}")
            edge_set.add((min(u, v), max(u, v)))
        ids = set(sites) if sites is not None else set()
        for u, v in edge_set:
            ids.update((u, v))
        if not ids:
            raise LatticeError("lattice has no sites")
        ordered = sorted(int(s) for s in ids)
        pos = {s: i for i, s in enumerate(ordered)}
        adj = [[] for _ in ordered]
        for u, v in edge_set:
            adj[pos[u]].append(pos[v])
            adj[pos[v]].append(pos[u])
        indptr = np.zeros(len(ordered) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in adj])
        indices = np.array([w for a in adj for w in sorted(a)], dtype=np.int64)
        hops = kernels.graph_distances(len(ordered), indptr, indices)
        if (hops < 0).any():
            raise LatticeError("graph is not connected")
        return cls(ordered, hops.astype(np.float64), "graph", edges=frozenset(edge_set),
                   shape=shape)

    @classmethod
    def chain(cls, n: int) -> "Lattice":
        """Open chain with sites ``1..n``."""
        if n < 1:
            raise LatticeError("chain needs at least one site")
        if n == 1:
            return cls.graph([], sites=[1])
        return cls.graph([(j, j + 1) for j in range(1, n)])

    @classmethod
    def grid(cls, shape: Sequence[int]) -> "Lattice":
        """Rectangular grid graph; site ``(x_1, ..., x_k)`` gets id ``1 + row-major offset``."""
        shape = tuple(int(s) for s in shape)
        strides = [int(np.prod(shape[:i])) for i in range(len(shape))]

        def sid(x):
            return 1 + sum((c - 1) * s for c, s in zip(x, strides))

        edges = []
        for x in itertools.product(*(range(1, s + 1) for s in shape)):
            for i, s in enumerate(shape):
                if x[i] < s:
                    y = list(x)
                    y[i] += 1
                    edges.append((sid(x), sid(y)))
        sites = [sid(x) for x in itertools.product(*(range(1, s + 1) for s in shape))]
        return cls.graph(edges, sites=sites, shape=shape)

    @classmethod
    def hypercube(cls, L: int, eta: int, p: float = math.inf) -> "Lattice":
        if L < 1 or eta < 1:
            raise LatticeError("hypercube needs L >= 1 and eta >= 1")
        if not p >= 1:
            raise LatticeError("metric exponent must lie in [1, inf]")
        n = L**eta
        coords = np.empty((n, eta), dtype=np.int64)
        for sid in range(n):
            rest = sid
            for i in range(eta):
                coords[sid, i] = rest % L + 1
                rest //= L
        dist = kernels.pnorm_distances(coords, p)
        coords.setflags(write=False)
        return cls(range(n), dist, "hypercube", L=L, eta=eta, p=p, coords=coords)

    @classmethod
    def from_dict(cls, spec: dict) -> "Lattice":
        geom = spec.get("geometry")
        if geom == "graph":
            if "shape" in spec:
                return cls.grid(spec["shape"])
            return cls.graph(spec["edges"], sites=spec.get("sites"))
        if geom == "chain":
            return cls.chain(int(spec["n"]))
        if geom == "hypercube":
            L, eta, *rest = spec.get("params", [spec.get("L"), spec.get("eta")])
            p = rest[0] if rest else spec.get("p", math.inf)
            p = math.inf if p in (None, "inf", "Infinity") else float(p)
            return cls.hypercube(int(L), int(eta), p)
        raise LatticeError(f"unknown geometry {geom!r}")

    def to_dict(self) -> dict:
        if self.geometry == "hypercube":
            p = "inf" if math.isinf(self.p) else self.p
            return {"geometry": "hypercube", "params": [self.L, self.eta, p]}
        if self.shape is not None:
            return {"geometry": "graph", "shape": list(self.shape)}
        return {"geometry": "graph", "edges": sorted(map(list, self.edges)),
                "sites": list(self.sites)}

    # basic queries

    @property
    def dimension(self) -> int:
        """Spatial dimension: eta for hypercubes, grid rank for grids, 1 otherwise."""
        if self.eta is not None:
            return self.eta
        if self.shape is not None:
            return sum(1 for s in self.shape if s > 1) or 1
        return 1

    @property
    def is_normalized(self) -> bool:
        """Whether ``|x_i - y_i| <= d(x, y)`` holds, i.e. cube algebra is available."""
        return self.geometry == "hypercube"

    def _idx(self, x) -> int:
        try:
            return self.index[int(x)]
        except KeyError:
            raise LatticeError(f"unknown site id {x}") from None

    def indices(self, sites: Iterable[int]) -> np.ndarray:
        return np.array(sorted(self._idx(s) for s in sites), dtype=np.int64)

    def distance(self, x, y) -> float:
        return float(self.dist[self._idx(x), self._idx(y)])

    def coords(self, x) -> tuple:
        if self._coords is None:
            raise LatticeError("coordinates exist only for hypercube lattices")
        return tuple(int(c) for c in self._coords[self._idx(x)])

    def site_at(self, coords: Sequence[int]) -> int:
        if self.geometry != "hypercube":
            raise LatticeError("coordinates exist only for hypercube lattices")
        if len(coords) != self.eta or any(not 1 <= c <= self.L for c in coords):
            raise LatticeError(f"coordinates {tuple(coords)} outside the lattice")
        return int(sum((c - 1) * self.L**i for i, c in enumerate(coords)))

    def neighbor_pairs(self) -> list:
        """Unordered site pairs at distance exactly 1."""
        iu = np.argwhere(np.triu(np.abs(self.dist - 1.0) < TOL, 1))
        return [(self.sites[i], self.sites[j]) for i, j in iu]

    def _check_region(self, A, name="region") -> np.ndarray:
        A = region(A)
        if not A:
            raise LatticeError(f"{name} is empty")
        return self.indices(A)

    # set geometry

    def set_distance(self, A, B) -> float:
        ia = self._check_region(A, "first region")
        ib = self._check_region(B, "second region")
        return float(self.dist[np.ix_(ia, ib)].min())

    def diameter(self, A) -> float:
        ia = self._check_region(A)
        return float(self.dist[np.ix_(ia, ia)].max())

    def set_geometry(self, A, B) -> dict:
        return {"set_distance": self.set_distance(A, B), "diameter_A": self.diameter(A)}

    def distance_to_complement(self, Y, R) -> float:
        """``d(Y, Lambda \\ R)``; infinite when ``R`` covers the lattice."""
        rest = self.all - region(R)
        if not rest:
            return math.inf
        return self.set_distance(Y, rest)

    def _dist_to(self, Y) -> np.ndarray:
        iy = self._check_region(Y)
        return self.dist[iy].min(axis=0)

    def ball(self, Y, r: float, closed: bool = False) -> frozenset:
        """Open (``d < r``) or closed (``d <= r``) ball around a non-empty region."""
        if r < 0:
            raise LatticeError("ball radius must be non-negative")
        d = self._dist_to(Y)
        mask = d <= r + TOL if closed else d < r - TOL
        return frozenset(self.sites[i] for i in np.flatnonzero(mask))

    def complement(self, R) -> frozenset:
        return self.all - region(R)

    # cubes

    def full_cube(self) -> Cube:
        return Cube((1,) * self.eta, (self.L,) * self.eta)

    def cube_sites(self, cube: Cube) -> frozenset:
        if self.geometry != "hypercube":
            raise LatticeError("cubes exist only for hypercube lattices")
        if cube.dimension != self.eta:
            raise LatticeError("cube dimension mismatch")
        c = cube.intersect(self.full_cube())
        if c.is_empty:
            return frozenset()
        ranges = [range(lo, hi + 1) for lo, hi in zip(c.lower, c.upper)]
        return frozenset(self.site_at(x) for x in itertools.product(*ranges))

    def enlarge(self, cube: Cube, r: int) -> Cube:
        return cube.enlarge(r, self.L)


def extension(supports: Iterable, R) -> frozenset:
    """Union of all supports that intersect ``R`` (empty if none do)."""
    R = region(R)
    out = set()
    for Z in supports:
        if not R.isdisjoint(Z):
            out.update(Z)
    return frozenset(out)


def distance(lattice: Lattice, x, y) -> float:
    return lattice.distance(x, y)


def set_geometry(lattice: Lattice, A, B) -> dict:
    return lattice.set_geometry(A, B)


def ball(lattice: Lattice, Y, r: float, closed: bool = False) -> frozenset:
    return lattice.ball(Y, r, closed)


def geometry_report(lattice: Lattice, n_random: int = 1000, seed: int = 0,
                    n_cube: int | None = None) -> dict:
    """Check metric axioms and the finite-metric-space ball/cube lemmas.

    Single-site regions and all radii up to the lattice diameter are checked
    exhaustively; random multi-site regions add ``n_random`` extra cases.
    Hypercubic lattices get ``n_cube`` random cube cases (default
    ``n_random // 10``). Returns a mapping from property name to
    ``(cases, violations)``.
    """
    rng = np.random.default_rng(seed)
    sites = lattice.sites
    n = lattice.n
    D = lattice.dist
    diam = float(D.max())
    radii = sorted({0.0, 0.5, *np.unique(D).tolist(), diam + 1.0})
    counts: dict = {}

    def record(name, ok):
        c, v = counts.get(name, (0, 0))
        counts[name] = (c + 1, v + (0 if ok else 1))

    # metric axioms
    for i in range(n):
        record("identity", D[i, i] == 0)
        for j in range(n):
            record("symmetry", D[i, j] == D[j, i])
            record("nonnegative", D[i, j] >= 0 and (i == j or D[i, j] > 0))
    for _ in range(max(n_random, 1)):
        i, j, k = rng.integers(0, n, 3)
        record("triangle", D[i, k] <= D[i, j] + D[j, k] + TOL)

    regions = [frozenset([s]) for s in sites]
    for _ in range(n_random // 10 + 1):
        size = int(rng.integers(1, min(n, 4) + 1))
        regions.append(frozenset(rng.choice(sites, size, replace=False).tolist()))

    for Y in regions:
        diam_y = lattice.diameter(Y)
        for r in radii:
            bo = lattice.ball(Y, r)
            bc = lattice.ball(Y, r, closed=True)
            if lattice.all - bo:
                record("open_ball_complement", lattice.set_distance(Y, lattice.all - bo) >= r - TOL)
            if lattice.all - bc:
                record("closed_ball_complement", lattice.set_distance(Y, lattice.all - bc) > r + TOL)
            if bo:
                record("open_ball_diameter", lattice.diameter(bo) < 2 * r + diam_y)
            s = float(rng.choice(radii))
            inner = lattice.ball(Y, s)
            if inner:
                record("nested_balls", lattice.ball(inner, r, closed=True) <= lattice.ball(Y, r + s))

    for _ in range(n_random):
        i, j = rng.integers(0, n, 2)
        r = float(rng.choice(radii))
        # half of the radius pairs are drawn inside the separated range
        fits = [v for v in radii if v <= D[i, j] - r]
        s = float(rng.choice(fits)) if fits and rng.random() < 0.5 else float(rng.choice(radii))
        if D[i, j] >= r + s:
            x, y = frozenset([sites[i]]), frozenset([sites[j]])
            record("separated_balls", not (lattice.ball(x, r) & lattice.ball(y, s, closed=True)))
        size = int(rng.integers(1, min(n, 4) + 1))
        Y = frozenset(rng.choice(sites, int(rng.integers(1, min(n, 4) + 1)), replace=False).tolist())
        Z = frozenset(rng.choice(sites, size, replace=False).tolist())
        if rng.random() < 0.5:
            Z = Z | {sorted(Y)[int(rng.integers(len(Y)))]}
        if Z & Y:
            record("diameter_ball_cover", Z <= lattice.ball(Y, lattice.diameter(Z), closed=True))

    pairs = [frozenset(p) for p in lattice.neighbor_pairs()]
    a = max((lattice.diameter(Z) for Z in pairs), default=0.0)
    for _ in range(n_random):
        Y = frozenset(rng.choice(sites, int(rng.integers(1, min(n, 4) + 1)), replace=False).tolist())
        R = Y | frozenset(rng.choice(sites, int(rng.integers(0, n)), replace=False).tolist())
        rest = lattice.all - R
        s = float(rng.choice(radii))
        record("extension_in_closed_ball", extension(pairs, R) <= lattice.ball(R, a, closed=True))
        if not rest:
            continue
        dyr = lattice.set_distance(Y, rest)
        record("ball_inside_region", lattice.ball(Y, dyr) <= R)
        inner = lattice.ball(Y, s)
        if inner:
            record("open_ball_shift", lattice.set_distance(inner, rest) > dyr - s)
        record("closed_ball_shift",
               lattice.set_distance(lattice.ball(Y, s, closed=True), rest) >= dyr - s)

    if lattice.is_normalized:
        L, eta = lattice.L, lattice.eta
        for _ in range(max(n_random // 10, 1) if n_cube is None else n_cube):
            a = rng.integers(1, L + 1, eta)
            b = rng.integers(1, L + 1, eta)
            cube = Cube(tuple(np.minimum(a, b)), tuple(np.maximum(a, b)))
            csites = lattice.cube_sites(cube)
            r = float(rng.uniform(0, L))
            env = lattice.cube_sites(lattice.enlarge(cube, math.floor(r)))
            record("cube_ball_envelope", lattice.ball(csites, r, closed=True) <= env)
            c = rng.integers(1, L + 1, eta)
            d = rng.integers(1, L + 1, eta)
            other = Cube(tuple(np.minimum(c, d)), tuple(np.maximum(c, d)))
            record("cube_intersection",
                   lattice.cube_sites(cube.intersect(other)) == csites & lattice.cube_sites(other))
            for sid in (sites[int(rng.integers(n))],):
                x = lattice.coords(sid)
                y = lattice.coords(sites[int(rng.integers(n))])
                record("coordinate_normalized",
                       all(abs(u - v) <= lattice.distance(sid, lattice.site_at(y)) + TOL
                           for u, v in zip(x, y)))
    return counts
