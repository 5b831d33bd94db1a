"""Local Hamiltonians: terms with supports, structural parameters, restrictions.

A Hamiltonian is a sum of local terms ``h_Z`` where each term acts on a region
``Z`` of a :class:`~certdyn.lattice.Lattice`. Terms are either constant or
piecewise constant in time (zero outside their listed pieces). Terms that
share a support are merged, so every support appears at most once.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .lattice import Lattice, extension, region
from .linalg import PAULIS, embed_matrix, is_hermitian, kron_all, op_norm, partial_trace

HERM_TOL = 1e-12


class HamiltonianError(ValueError):
    """Invalid term, Hamiltonian or parameter request."""


class NoInteractions(HamiltonianError):
    """Interaction split found no multi-site terms."""


@dataclass(frozen=True)
class LocalTerm:
    """Term ``h_Z(t)`` acting on ``support`` (factor order = ascending site id).

    ``pieces`` is a tuple of ``(start, end, matrix)``; a constant term has the
    single piece ``(-inf, inf, matrix)``. The term is zero outside its pieces.
    """

    support: frozenset
    pieces: tuple

    @classmethod
    def constant(cls, support, matrix) -> "LocalTerm":
        return cls.scheduled(support, [(-math.inf, math.inf, matrix)])

    @classmethod
    def scheduled(cls, support, schedule) -> "LocalTerm":
        support = region(support)
        if not support:
            raise HamiltonianError("term support is empty")
        pieces = []
        for start, end, mat in schedule:
            mat = np.array(mat, dtype=complex)
            mat.setflags(write=False)
            if not start < end:
                raise HamiltonianError("schedule interval must have start < end")
            if not is_hermitian(mat, HERM_TOL):
                raise HamiltonianError(f"term on {sorted(support)} is not Hermitian")
            pieces.append((float(start), float(end), mat))
        pieces.sort(key=lambda p: p[0])
        for (_, e0, _), (s1, _, _) in zip(pieces, pieces[1:]):
            if s1 < e0:
                raise HamiltonianError("schedule intervals overlap")
        return cls(support, tuple(pieces))

    @property
    def sites(self) -> tuple:
        return tuple(sorted(self.support))

    @property
    def is_constant(self) -> bool:
        return len(self.pieces) == 1 and math.isinf(self.pieces[0][0]) and math.isinf(self.pieces[0][1])

    def at(self, t: float):
        """Matrix at time ``t`` (``None`` when the term is zero)."""
        for start, end, mat in self.pieces:
            if start <= t < end:
                return mat
        return None

    def breakpoints(self) -> set:
        out = set()
        for start, end, _ in self.pieces:
            out.update(v for v in (start, end) if math.isfinite(v))
        return out

    def max_norm(self) -> float:
        return max((op_norm(m) for _, _, m in self.pieces), default=0.0)

    def is_zero(self) -> bool:
        return all(not np.any(m) for _, _, m in self.pieces)

    def plus(self, other: "LocalTerm") -> "LocalTerm":
        """Pointwise sum of two terms on the same support."""
        if other.support != self.support:
            raise HamiltonianError("can only merge terms with equal supports")
        if self.is_constant and other.is_constant:
            return LocalTerm.constant(self.support, self.pieces[0][2] + other.pieces[0][2])
        cuts = sorted(self.breakpoints() | other.breakpoints() | {-math.inf, math.inf})
        schedule = []
        for lo, hi in zip(cuts, cuts[1:]):
            probe = _probe(lo, hi)
            a, b = self.at(probe), other.at(probe)
            if a is None and b is None:
                continue
            mat = (a if a is not None else 0) + (b if b is not None else 0)
            schedule.append((lo, hi, mat))
        return LocalTerm.scheduled(self.support, schedule)

    def to_dict(self) -> dict:
        def enc(m):
            return [[[float(v.real), float(v.imag)] for v in row] for row in m]

        out = {"support": list(self.sites)}
        if self.is_constant:
            out["matrix"] = enc(self.pieces[0][2])
        else:
            out["schedule"] = [{"start": _enc_time(s), "end": _enc_time(e), "matrix": enc(m)}
                               for s, e, m in self.pieces]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LocalTerm":
        def dec(m):
            return np.array([[complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in row]
                             for row in m])

        if "schedule" in d:
            return cls.scheduled(d["support"], [(_dec_time(p["start"]), _dec_time(p["end"]),
                                                 dec(p["matrix"])) for p in d["schedule"]])
        return cls.constant(d["support"], dec(d["matrix"]))


def _enc_time(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _dec_time(v):
    return float(v) if not isinstance(v, str) else float(v.replace("Infinity", "inf"))


def _probe(lo: float, hi: float) -> float:
    """A time strictly inside ``[lo, hi)`` (handles infinite ends)."""
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - 1.0
    if math.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


class LocalHamiltonian:
    """Sum of local terms on a lattice.

    Args:
        lattice: The site set and metric.
        terms: Local terms; terms with equal supports are merged.
        dims: Local dimension per site (int for all sites, or a mapping).
        require_cover: Enforce that every site lies in some non-zero term's
            support. Restrictions switch this off.
    """

    def __init__(self, lattice: Lattice, terms: Iterable[LocalTerm], dims=2,
                 require_cover: bool = True):
        self.lattice = lattice
        if isinstance(dims, int):
            dims = {s: dims for s in lattice.sites}
        self.dims = {int(s): int(dims[s]) for s in lattice.sites}
        if any(d < 2 for d in self.dims.values()):
            raise HamiltonianError("local dimensions must be at least 2")
        merged: dict = {}
        for term in terms:
            if not term.support <= lattice.all:
                raise HamiltonianError(f"support {sorted(term.support)} not in lattice")
            expect = int(np.prod([self.dims[s] for s in term.support]))
            for _, _, m in term.pieces:
                if m.shape != (expect, expect):
                    raise HamiltonianError(
                        f"term on {term.sites} has shape {m.shape}, expected ({expect}, {expect})")
            if term.support in merged:
                merged[term.support] = merged[term.support].plus(term)
            else:
                merged[term.support] = term
        self.terms = tuple(t for t in sorted(merged.values(), key=lambda t: (len(t.sites), t.sites))
                           if not t.is_zero())
        if require_cover:
            covered = set().union(*(t.support for t in self.terms)) if self.terms else set()
            missing = lattice.all - covered
            if missing:
                raise HamiltonianError(f"sites {sorted(missing)} are not covered by any term")
        self._eig_cache: dict = {}

    # structure

    @property
    def supports(self) -> list:
        return [t.support for t in self.terms]

    @property
    def n(self) -> int:
        return self.lattice.n

    def is_time_dependent(self) -> bool:
        return any(not t.is_constant for t in self.terms)

    def breakpoints(self) -> list:
        out = set()
        for t in self.terms:
            out |= t.breakpoints()
        return sorted(out)

    def restrict(self, V) -> "LocalHamiltonian":
        """Keep exactly the terms whose support lies inside ``V``."""
        V = region(V)
        return LocalHamiltonian(self.lattice, [t for t in self.terms if t.support <= V],
                                self.dims, require_cover=False)

    def subset(self, terms: Iterable[LocalTerm]) -> "LocalHamiltonian":
        return LocalHamiltonian(self.lattice, terms, self.dims, require_cover=False)

    def extension(self, R) -> frozenset:
        return extension(self.supports, R)

    def active_sites(self) -> frozenset:
        return frozenset().union(*self.supports) if self.terms else frozenset()

    # dense representation

    def dim(self, sites: Sequence[int]) -> int:
        return int(np.prod([self.dims[s] for s in sites]))

    def dense(self, t: float = 0.0, sites: Sequence[int] | None = None) -> np.ndarray:
        """Dense matrix of ``H(t)`` on ``sites`` (default: all sites, ascending).

        Every term support must lie inside ``sites``.
        """
        sites = tuple(sorted(sites)) if sites is not None else self.lattice.sites
        pos = {s: i for i, s in enumerate(sites)}
        dims = [self.dims[s] for s in sites]
        D = int(np.prod(dims))
        out = np.zeros((D, D), dtype=complex)
        for term in self.terms:
            mat = term.at(t)
            if mat is None:
                continue
            if not term.support <= set(sites):
                raise HamiltonianError(f"term on {term.sites} not inside the requested sites")
            out += embed_matrix(mat, [pos[s] for s in term.sites], dims)
        return out

    def eig(self, t: float, sites: tuple):
        """Cached eigendecomposition of ``H(t)`` on ``sites``."""
        key = (sites, tuple(id(term.at(t)) for term in self.terms))
        if key not in self._eig_cache:
            if len(self._eig_cache) > 64:
                self._eig_cache.clear()
            H = self.dense(t, sites)
            self._eig_cache[key] = np.linalg.eigh(H)
        return self._eig_cache[key]

    # serialization

    def to_dict(self) -> dict:
        return {"lattice": self.lattice.to_dict(),
                "dims": [self.dims[s] for s in self.lattice.sites],
                "terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "LocalHamiltonian":
        lattice = Lattice.from_dict(d["lattice"])
        dims = d.get("dims", 2)
        if isinstance(dims, list):
            dims = dict(zip(lattice.sites, dims))
        terms = [LocalTerm.from_dict(t) for t in d["terms"]]
        return cls(lattice, terms, dims)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "LocalHamiltonian":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class StructuralParams:
    """Locality parameters of a Hamiltonian.

    Attributes:
        J: Twice the largest term norm over all times.
        a: Largest support diameter.
        Z: Largest number of supports meeting a given support (itself included).
        M: Smallest prefactor with ``|R_{r,y}| <= M r^kappa`` for the fitted shells.
        kappa: Shell growth exponent.
        Y: Largest support size.
        v: Lieb-Robinson velocity ``J Z e``.
        r0_max: Largest shell count at ``r = 0`` (recorded, excluded from the fit
            when ``kappa > 0``).
        shell_max: Largest shell count per ``r`` (index ``r``).
        n: Number of sites.
    """

    J: float
    a: float
    Z: int
    M: float
    kappa: float
    Y: int
    v: float
    r0_max: int = 0
    shell_max: tuple = field(default=(), compare=False)
    n: int = 0

    def with_overrides(self, **kw) -> "StructuralParams":
        out = replace(self, **kw)
        if "v" not in kw:
            out = replace(out, v=velocity(out.J, out.Z))
        return out

    def to_dict(self) -> dict:
        return {"J": self.J, "a": self.a, "Z": self.Z, "M": self.M, "kappa": self.kappa,
                "Y": self.Y, "v": self.v, "r0_max": self.r0_max, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralParams":
        J, Zc = float(d["J"]), int(d["Z"])
        return cls(J=J, a=float(d["a"]), Z=Zc, M=float(d["M"]), kappa=float(d["kappa"]),
                   Y=int(d.get("Y", 2)), v=float(d.get("v", velocity(J, Zc))),
                   r0_max=int(d.get("r0_max", 0)), n=int(d.get("n", 0)))


def velocity(J: float, Z: int) -> float:
    """Lieb-Robinson velocity ``J * Z * e``."""
    if J < 0 or Z < 1:
        raise HamiltonianError("velocity needs J >= 0 and Z >= 1")
    return J * Z * math.e


def shell_counts(H: LocalHamiltonian, a: float | None = None) -> np.ndarray:
    """Matrix ``c[y, r] = |R_{r,y}|``: supports with ``d(y, Z)/a`` in ``[r, r+1)``."""
    lat = H.lattice
    sups = H.supports
    if a is None:
        a = max((lat.diameter(Z) for Z in sups), default=0.0)
    a_eff = a if a > 0 else 1.0
    dmat = kernels.set_distances(lat.dist, [lat.indices(Z) for Z in sups])
    shells = np.floor(dmat / a_eff + 1e-12).astype(np.int64)
    rmax = int(shells.max()) if shells.size else 0
    counts = np.zeros((lat.n, rmax + 1), dtype=np.int64)
    for y in range(lat.n):
        counts[y] = np.bincount(shells[y], minlength=rmax + 1)
    return counts


def structural_params(H: LocalHamiltonian, kappa: float | None = None,
                      r_max: int | None = None) -> StructuralParams:
    """Compute ``J, a, Z, Y`` by enumeration and fit ``M`` for the given ``kappa``.

    Args:
        H: The Hamiltonian.
        kappa: Shell growth exponent; defaults to lattice dimension minus one.
        r_max: Largest shell index included in the fit (default: all shells).

    Raises:
        HamiltonianError: if ``kappa`` is negative or ``H`` has no terms.
    """
    if not H.terms:
        raise HamiltonianError("Hamiltonian has no terms")
    lat = H.lattice
    if kappa is None:
        kappa = float(lat.dimension - 1)
    if kappa < 0:
        raise HamiltonianError("kappa must be non-negative")
    sups = H.supports
    J = 2.0 * max(t.max_norm() for t in H.terms)
    a = max(lat.diameter(Z) for Z in sups)
    Zc = max(sum(1 for W in sups if not W.isdisjoint(Zs)) for Zs in sups)
    Yc = max(len(Zs) for Zs in sups)
    counts = shell_counts(H, a)
    top = counts.max(axis=0)
    last = counts.shape[1] - 1 if r_max is None else min(r_max, counts.shape[1] - 1)
    if kappa == 0:
        M = float(top[: last + 1].max())
    else:
        ratios = [top[r] / r**kappa for r in range(1, last + 1)]
        M = float(max(ratios, default=float(top[0])))
    return StructuralParams(J=J, a=a, Z=Zc, M=M, kappa=float(kappa), Y=Yc,
                            v=velocity(J, Zc), r0_max=int(top[0]),
                            shell_max=tuple(int(c) for c in top), n=lat.n)


def interaction_split(H: LocalHamiltonian) -> tuple:
    """Split into single-site terms ``F`` and multi-site terms ``G``."""
    F = [t for t in H.terms if len(t.support) == 1]
    G = [t for t in H.terms if len(t.support) >= 2]
    if not G:
        raise NoInteractions("no interactions: every term acts on a single site")
    return H.subset(F), H.subset(G)


def minimize_term_norms(H: LocalHamiltonian) -> LocalHamiltonian:
    """Move single-site parts of multi-site terms into single-site terms.

    Each multi-site matrix is projected (Hilbert-Schmidt) onto the span of
    operators acting on one site only; that part is subtracted and re-added as
    single-site terms, so the total Hamiltonian is unchanged. A term is only
    rewritten when its operator norm does not increase.
    """
    out = []
    for term in H.terms:
        if len(term.support) < 2:
            out.append(term)
            continue
        sites = term.sites
        dims = [H.dims[s] for s in sites]
        Dz = int(np.prod(dims))
        new_sched, shifts = [], {s: [] for s in sites}
        changed = True
        for start, end, mat in term.pieces:
            c = np.trace(mat).real / Dz
            reds = [partial_trace(mat, [k], dims) / (Dz // dims[k]) for k in range(len(sites))]
            proj = sum(embed_matrix(reds[k], [k], dims) for k in range(len(sites)))
            proj = proj - (len(sites) - 1) * c * np.eye(Dz)
            rest = mat - proj
            if op_norm(rest) > op_norm(mat) + 1e-12:
                changed = False
                break
            new_sched.append((start, end, rest))
            # the identity component is shared evenly between the shifted sites
            share = (len(sites) - 1) * c / len(sites)
            for k, s in enumerate(sites):
                shifts[s].append((start, end, reds[k] - share * np.eye(dims[k])))
        if not changed:
            out.append(term)
            continue
        out.append(LocalTerm.scheduled(term.support, new_sched))
        for s, sched in shifts.items():
            out.append(LocalTerm.scheduled([s], sched))
    return LocalHamiltonian(H.lattice, out, H.dims)


# model catalogue

def heisenberg_bond(coupling: float = 1.0) -> np.ndarray:
    """``coupling * (XX + YY + ZZ) / 3``; operator norm equals ``|coupling|``."""
    X, Y, Z = PAULIS["X"], PAULIS["Y"], PAULIS["Z"]
    return coupling * (np.kron(X, X) + np.kron(Y, Y) + np.kron(Z, Z)) / 3.0


def _bonds_for(lattice: Lattice) -> list:
    if lattice.geometry == "hypercube":
        pairs = []
        for x in lattice.sites:
            cx = lattice.coords(x)
            for i in range(lattice.eta):
                if cx[i] < lattice.L:
                    cy = list(cx)
                    cy[i] += 1
                    pairs.append((x, lattice.site_at(cy)))
        return pairs
    return sorted(lattice.edges)


def build_model(kind: str, size=None, couplings: Sequence[float] | dict | None = None,
                shape=None, path=None) -> LocalHamiltonian:
    """Construct a standard nearest-neighbour spin-1/2 model.

    Args:
        kind: One of ``heisenberg_chain``, ``ising_chain_zz``,
            ``ising_transverse``, ``heisenberg_grid``, ``custom``.
        size: ``n`` for chains, ``(L, eta)`` for hypercubic grids.
        couplings: Bond coupling (per-bond operator norm) and, for the
            transverse-field model, the field strength. Sequence or mapping
            with keys ``J`` and ``h``.
        shape: For ``heisenberg_grid``, a rectangular graph grid shape instead
            of a hypercube.
        path: JSON file for ``custom``.
    """
    if isinstance(couplings, dict):
        J = float(couplings.get("J", 1.0))
        h = float(couplings.get("h", 1.0))
    else:
        couplings = list(couplings or [])
        J = float(couplings[0]) if couplings else 1.0
        h = float(couplings[1]) if len(couplings) > 1 else 1.0
    if kind in ("custom", "custom-from-file"):
        if path is None:
            raise HamiltonianError("custom model needs a file path")
        return LocalHamiltonian.load(path)
    if kind == "heisenberg_grid":
        if shape is not None:
            lat = Lattice.grid(shape)
        else:
            L, eta = size
            lat = Lattice.hypercube(int(L), int(eta))
        if lat.n < 2:
            raise HamiltonianError("model needs at least two sites")
        return LocalHamiltonian(lat, [LocalTerm.constant(p, heisenberg_bond(J)) for p in _bonds_for(lat)])
    if kind not in ("heisenberg_chain", "ising_chain_zz", "ising_transverse"):
        raise HamiltonianError(f"unknown model kind {kind!r}")
    n = int(size)
    if n < 2:
        raise HamiltonianError("model needs at least two sites")
    lat = Lattice.chain(n)
    terms = []
    for j in range(1, n):
        if kind == "heisenberg_chain":
            terms.append(LocalTerm.constant((j, j + 1), heisenberg_bond(J)))
        else:
            terms.append(LocalTerm.constant((j, j + 1), J * np.kron(PAULIS["Z"], PAULIS["Z"])))
    if kind == "ising_transverse":
        terms += [LocalTerm.constant((j,), h * PAULIS["X"]) for j in range(1, n + 1)]
    return LocalHamiltonian(lat, terms)


def pauli_term(support, labels: str, coeff: float = 1.0) -> LocalTerm:
    """Term ``coeff * P_1 (x) ... (x) P_k`` with Pauli labels in ascending-site order."""
    return LocalTerm.constant(support, coeff * kron_all([PAULIS[c] for c in labels]))
