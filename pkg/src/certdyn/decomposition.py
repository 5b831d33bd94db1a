"""Decompositions of the time evolution into products of local unitaries.

Both constructions remove groups of terms ``F`` from the Hamiltonian one at a
time. Removing ``F`` (supported on ``Y``) from ``H`` is compensated by a
unitary ``V'`` on the extension ``barR`` of a region ``R`` around ``Y``, the
solution of::

    d/ds V'(s) = i L'(s) V'(s),   V'(t) = 1,   L'(s) = tau^{H_barR}_{ts}(F(s)).

Then ``V' U^{H - F}_{ts}`` approximates ``U^H_{ts}``. The sequential
construction removes the terms of one site at a time (any lattice); the
hypercubic construction cuts a hypercube into cubes of side ``Omega`` and
removes the couplings between cubes surface segment by surface segment.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .exact import check_dim, embed, nontrivial_support, propagator
from .hamiltonian import LocalHamiltonian, StructuralParams, structural_params
from .lattice import Cube, Lattice, extension, region
from .linalg import expm_herm, op_norm, polar_unitary
from .lr_bounds import ceil_da, is_large_enough

# commutator-free fourth-order Magnus scheme with two Gauss nodes
_C1, _C2 = 0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6
_A1, _A2 = (3 - 2 * math.sqrt(3)) / 12, (3 + 2 * math.sqrt(3)) / 12


class StepSizeFailure(RuntimeError):
    """The correction ODE did not converge or lost unitarity."""


class DecompositionError(ValueError):
    """Invalid decomposition parameters (e.g. odd or too small ``Omega``)."""


@dataclass
class PerturbationRemoval:
    """One removal step: terms ``F`` on ``Y``, region ``R``, extension ``barR`` and ``V'``."""

    index: int
    F: LocalHamiltonian
    Y: frozenset
    R: frozenset
    barR: frozenset
    V_prime: np.ndarray | None = None
    bound: float | None = None
    d_a: float | None = None
    label: tuple = ()


@dataclass
class DecomposedEvolution:
    """Factors in application order (``factors[0]`` acts first) with layer metadata.

    Each factor is ``(support, unitary, tag)``. ``layers`` lists factor indices
    whose supports are pairwise disjoint.
    """

    factors: list
    layers: list
    meta: dict = field(default_factory=dict)
    steps: list = field(default_factory=list)

    def circuit(self) -> list:
        return [(s, U) for s, U, _ in self.factors]

    def dense(self, sites: Sequence[int], dims) -> np.ndarray:
        sites = tuple(sorted(sites))
        D = int(np.prod([dims[x] for x in sites]))
        check_dim(D)
        V = np.eye(D, dtype=complex)
        for support, U, _ in self.factors:
            V = embed(U, support, sites, dims) @ V
        return V

    def layers_disjoint(self) -> bool:
        for layer in self.layers:
            seen: set = set()
            for k in layer:
                s = set(self.factors[k][0])
                if seen & s:
                    return False
                seen |= s
        return True


# local correction

def _time_cuts(lo: float, hi: float, *Hs) -> list:
    cuts = {lo, hi}
    for H in Hs:
        cuts.update(b for b in H.breakpoints() if lo < b < hi)
    return sorted(cuts)


def _conj_factory(G: LocalHamiltonian, sites: tuple, t: float):
    """``sigma -> U^G_{t sigma}`` on ``sites``."""
    if not G.is_time_dependent():
        w, V = np.linalg.eigh(G.dense(0.0, sites)) if G.terms else (np.zeros(G.dim(sites)), None)
        if V is None:
            return lambda sigma: np.eye(len(w), dtype=complex)
        return lambda sigma: (V * np.exp(-1j * w * (t - sigma))) @ V.conj().T
    return lambda sigma: propagator(G, t, sigma, sites)


def _cf4_segment(L_of, a: float, b: float, N: int, Y: np.ndarray) -> np.ndarray:
    """Advance ``dY/ds = i L(s) Y`` from ``s = a`` to ``s = b`` in ``N`` steps."""
    h = (b - a) / N
    for k in range(N):
        s0 = a + k * h
        L1, L2 = L_of(s0 + _C1 * h), L_of(s0 + _C2 * h)
        # exp(i h K) = expm_herm(K, -h)
        first = expm_herm(_A2 * L1 + _A1 * L2, -h)
        second = expm_herm(_A1 * L1 + _A2 * L2, -h)
        Y = second @ (first @ Y)
    return Y


def solve_correction(G: LocalHamiltonian, F: LocalHamiltonian, sites: tuple, t: float, s: float,
                     tol: float = 1e-10, max_steps: int = 2**14) -> dict:
    """``V'(s)`` for the correction ODE by step-doubled commutator-free Magnus integration.

    Integration runs from ``t`` to ``s`` across every breakpoint of ``G`` and
    ``F``; on each piece the step count doubles until two successive results
    agree to ``tol`` in operator norm.
    """
    D = G.dim(sites)
    check_dim(D)
    Y = np.eye(D, dtype=complex)
    if t == s or not F.terms:
        return {"V": Y, "steps": 0, "drift": 0.0}
    conj = _conj_factory(G, sites, t)
    normF = max(op_norm(F.dense(tt, sites)) for tt in _sample_times(F, s, t))

    def L_of(sigma):
        U = conj(sigma)
        A = F.dense(sigma, sites)
        out = U @ A @ U.conj().T
        return 0.5 * (out + out.conj().T)

    cuts = _time_cuts(min(s, t), max(s, t), G, F)
    if s < t:
        cuts = cuts[::-1]
    total = 0
    for a, b in zip(cuts, cuts[1:]):
        N = max(2, math.ceil(abs(b - a) * normF * 2))
        cur = _cf4_segment(L_of, a, b, N, Y)
        while True:
            if 2 * N > max_steps:
                raise StepSizeFailure(f"correction ODE did not reach tolerance {tol:g}")
            fine = _cf4_segment(L_of, a, b, 2 * N, Y)
            if op_norm(fine - cur) <= tol:
                break
            N, cur = 2 * N, fine
        total += 2 * N
        Y = fine
    drift = op_norm(Y.conj().T @ Y - np.eye(D))
    if drift > 1e-8:
        raise StepSizeFailure(f"correction lost unitarity (drift {drift:.2e})")
    if drift > 1e-10:
        Y = polar_unitary(Y)
    return {"V": Y, "steps": total, "drift": drift}


def closed_form_correction(G: LocalHamiltonian, F: LocalHamiltonian, sites: tuple, t: float,
                           s: float) -> np.ndarray:
    """``U^G_{ts} U^{G - F}_{st}``, the exact solution of the correction ODE (``F`` inside ``G``)."""
    names = {term.support for term in F.terms}
    rest = G.subset([term for term in G.terms if term.support not in names])
    return propagator(G, t, s, sites) @ propagator(rest, s, t, sites)


def correction_bound(params: StructuralParams, normA: float, t: float, s: float, d_a: float,
                     q: float) -> float | None:
    """``(2 M alpha_q / (v Z)) |A| exp(v |t - s| - D)``, or ``None`` when ``ceil(d_a)`` is too small."""
    if normA == 0 or math.isinf(d_a):
        return 0.0
    if not is_large_enough(d_a, params.kappa, q):
        return None
    D = (1 - q) * d_a
    alpha = math.exp(-(1 - q) * (ceil_da(d_a) - d_a))
    return (2 * params.M * alpha / (params.v * params.Z)) * normA * math.exp(params.v * abs(t - s) - D)


def local_correction(H: LocalHamiltonian, A: LocalHamiltonian, Y, R, t: float, s: float,
                     params: StructuralParams | None = None, q: float = 0.5,
                     universe=None, method: str = "magnus") -> dict:
    """Correction unitary for removing the terms ``A`` (on ``Y``) from ``H``.

    ``H`` is the Hamiltonian the terms are removed from and must contain them.
    ``universe`` (default: all sites) is the site set whose complement
    distance defines ``d_a``. ``method`` is ``"magnus"`` or ``"closed"``.

    Returns:
        dict with ``V_prime`` (on ``barR``, ascending order), ``barR``,
        ``bound`` (``None`` if not applicable), ``d_a`` and solver ``steps``.
    """
    Y, R = region(Y), region(R)
    if not Y <= R:
        raise DecompositionError("Y must lie inside R")
    lat = H.lattice
    universe = lat.all if universe is None else region(universe)
    barR = H.extension(R) | Y
    sites = tuple(sorted(barR))
    check_dim(H.dim(sites))
    G = H.restrict(barR)
    by_support = {term.support: term for term in G.terms}
    for term in A.terms:
        own = by_support.get(term.support)
        if own is None or any(not _same(term.at(tt), own.at(tt)) for tt in _sample_times(A, s, t)):
            raise DecompositionError("removed terms must be terms of H inside barR")
    if method == "magnus":
        sol = solve_correction(G, A, sites, t, s)
    elif method == "closed":
        sol = {"V": closed_form_correction(G, A, sites, t, s), "steps": 0, "drift": 0.0}
    else:
        raise ValueError(f"unknown correction method {method!r}")
    if params is None:
        params = structural_params(H) if len(H.terms) else None
    a = params.a if params is not None and params.a > 0 else 1.0
    rest = universe - R
    d_a = math.inf if not rest else lat.set_distance(Y, rest) / a
    normA = max((op_norm(A.dense(tt, sites)) for tt in _sample_times(A, s, t)), default=0.0)
    bound = correction_bound(params, normA, t, s, d_a, q) if params is not None else None
    return {"V_prime": sol["V"], "barR": barR, "sites": sites, "bound": bound, "d_a": d_a,
            "normA": normA, "steps": sol["steps"]}


def _same(x, y) -> bool:
    if x is None or y is None:
        return x is None and y is None
    return bool(np.allclose(x, y, atol=1e-12))


def _sample_times(A: LocalHamiltonian, s: float, t: float) -> list:
    cuts = _time_cuts(min(s, t), max(s, t), A)
    mids = [0.5 * (a + b) for a, b in zip(cuts, cuts[1:])]
    return mids or [s]


# sequential decomposition

def greedy_coloring(lattice: Lattice, radius: float) -> dict:
    """Greedy colouring (ascending ids) with ``C(x) = C(y)`` only if ``d(x, y) >= radius``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    cols = kernels.greedy_coloring(lattice.dist, radius)
    colors = {s: int(c) for s, c in zip(lattice.sites, cols)}
    return {"colors": colors, "L_colors": max(colors.values(), default=0)}


def sequential_decomposition(H: LocalHamiltonian, r: float, t: float, s: float = 0.0,
                             q: float = 0.5, site_order: Sequence[int] | None = None,
                             color_sorted: bool = False, params: StructuralParams | None = None,
                             method: str = "magnus", verify: bool = False) -> DecomposedEvolution:
    """Remove the terms of one site at a time in ``site_order``.

    Step ``j`` removes ``F_j = H_j - H_{j-1}`` where ``H_j`` holds the terms
    inside the first ``j`` sites ``Lambda_j``; its correction lives on the
    extension (within ``H_j``) of ``R_j = B^o_{(r-2) a}(Y_j) cap Lambda_j``.
    With ``color_sorted`` the sites are ordered by a greedy colouring of radius
    ``2 a r`` so that equal colours form layers of disjoint factors.
    With ``verify`` the dense per-step and total errors are recorded.
    """
    lat = H.lattice
    params = params or structural_params(H)
    a = params.a if params.a > 0 else 1.0
    meta = {"mode": "sequential", "r": r, "a": a, "q": q, "t": t, "s": s}
    if color_sorted:
        col = greedy_coloring(lat, 2 * a * r)
        order = sorted(lat.sites, key=lambda x: (col["colors"][x], x))
        meta.update(colors=col["colors"], L_colors=col["L_colors"])
    else:
        order = list(site_order) if site_order is not None else list(lat.sites)
    if sorted(order) != list(lat.sites):
        raise DecompositionError("site order must be a permutation of the lattice sites")
    d = r - 2
    factors, steps, layers = [], [], []
    prefix: set = set()
    prev_color = None
    for j, x in enumerate(order, start=1):
        prefix.add(x)
        Lj = frozenset(prefix)
        Hj = H.restrict(Lj)
        Fj = Hj.subset([term for term in Hj.terms if x in term.support])
        if not Fj.terms:
            continue
        Yj = frozenset().union(*Fj.supports)
        Rj = ((lat.ball(Yj, d * a) if d > 0 else frozenset()) | Yj) & Lj
        res = local_correction(Hj, Fj, Yj, Rj, t, s, params, q, universe=Lj, method=method)
        if d > 0 and not res["barR"] <= lat.ball({x}, r * a):
            raise AssertionError(f"correction support of step {j} leaves the radius-{r * a:g} ball")
        step = PerturbationRemoval(j, Fj, Yj, Rj, res["barR"], res["V_prime"], res["bound"],
                                   res["d_a"], (x,))
        steps.append(step)
        color = meta["colors"][x] if color_sorted else None
        if color_sorted and color == prev_color:
            layers[-1].append(len(factors))
        else:
            layers.append([len(factors)])
        prev_color = color
        factors.append((res["sites"], res["V_prime"], {"step": j, "site": x, "color": color}))
    out = DecomposedEvolution(factors, layers, meta, steps)
    out.meta["step_bounds"] = [st.bound for st in steps]
    out.meta["total_bound"] = (None if any(b is None for b in out.meta["step_bounds"])
                               else float(sum(out.meta["step_bounds"])))
    out.meta["epsilon_claim"] = sequential_epsilon(params, lat.n, r, q, t - s)
    if verify:
        _verify_sequential(H, order, out, t, s)
    return out


def sequential_epsilon(params: StructuralParams, n: int, r: float, q: float, dt: float) -> float | None:
    """``n exp(v |t - s| + c_2 - (1 - q) r)`` when ``ceil(r)`` is large enough, else ``None``."""
    if not is_large_enough(r, params.kappa, q):
        return None
    c2 = math.log(params.M / (params.Z * math.e)) + 2 * (1 - q)
    return n * math.exp(params.v * abs(dt) + c2 - (1 - q) * r)


def _verify_sequential(H, order, out: DecomposedEvolution, t, s) -> None:
    lat = H.lattice
    U = propagator(H, t, s)
    V = out.dense(lat.sites, H.dims)
    per = []
    prefix: set = set()
    by_step = {st.label[0]: k for k, st in enumerate(out.steps)}
    prev = np.eye(U.shape[0], dtype=complex)
    for x in order:
        prefix.add(x)
        Uj = propagator(H.restrict(prefix), t, s, lat.sites)
        if x in by_step:
            st = out.steps[by_step[x]]
            Vj = embed(st.V_prime, tuple(sorted(st.barR)), lat.sites, H.dims)
            per.append(op_norm(Uj - Vj @ prev))
        prev = Uj
    out.meta["dense_error"] = op_norm(U - V)
    out.meta["dense_step_errors"] = per
    out.meta["dense_step_sum"] = float(sum(per))


def support_growth(circuit: DecomposedEvolution, A_support, lattice: Lattice) -> dict:
    """Where ``V^* A V`` can act non-trivially.

    ``tracked`` grows the support through the factors in reverse application
    order, adding every factor support that meets it. ``envelope`` is the
    guaranteed region: ``B^o_{2 a r L}`` for the coloured sequential circuit,
    the closed radius-``lambda Omega`` Chebyshev ball for the hypercubic one
    (``lambda = eta 2^eta + 1``), and the whole lattice otherwise.
    """
    Y = set(region(A_support))
    for support, _, _ in reversed(circuit.factors):
        if Y & set(support):
            Y |= set(support)
    tracked = frozenset(Y)
    m = circuit.meta
    A = region(A_support)
    if not A:
        return {"tracked": tracked, "envelope": tracked}
    if m.get("mode") == "sequential" and "L_colors" in m and m["r"] > 2:
        env = lattice.ball(A, 2 * m["a"] * m["r"] * m["L_colors"])
    elif m.get("mode") == "hypercubic":
        lam = lattice.eta * 2**lattice.eta + 1
        env = lattice.ball(A, lam * m["omega"], closed=True)
    else:
        env = lattice.all
    return {"tracked": tracked, "envelope": env | A}


# hypercubic decomposition

def lsb(k: Sequence[int]) -> tuple:
    """Parity vector of ``k`` (1 for odd entries)."""
    return tuple(int(v) % 2 for v in k)


@dataclass
class HypercubicPlan:
    """Cube partition, coupling sets, correction regions and ordering for one ``Omega``."""

    lattice: Lattice
    omega: int
    a: float
    B: int
    cubes: dict
    supports: list = field(default_factory=list)
    sigma0: list = field(default_factory=list)
    S: set = field(default_factory=set)
    S_ij: dict = field(default_factory=dict)
    S_ijk: dict = field(default_factory=dict)
    S_prime: dict = field(default_factory=dict)
    order: list = field(default_factory=list)
    Y: dict = field(default_factory=dict)
    R: dict = field(default_factory=dict)
    barR: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def eta(self) -> int:
        return self.lattice.eta

    @property
    def adot(self) -> int:
        return int(math.floor(self.a + 1e-12))

    @property
    def r(self) -> float:
        return self.omega / 2 - 2 * self.adot

    @property
    def Xi(self) -> int:
        return self.eta * (self.B - 1) * self.B ** (self.eta - 1)

    def slab(self, i: int, lo: int, hi: int) -> frozenset:
        """Sites with coordinate ``i`` (1-based) in ``[lo:hi]``."""
        L = self.lattice.L
        lower = [1] * self.eta
        upper = [L] * self.eta
        lower[i - 1], upper[i - 1] = lo, hi
        return self.lattice.cube_sites(Cube(tuple(lower), tuple(upper)))

    def surface(self, i: int, k: tuple, lo: int, hi: int, grow: int = 0) -> frozenset:
        """``[lo:hi]_i x C_grow(tilde Q_k)`` with the surface cube in the other coordinates."""
        L, om = self.lattice.L, self.omega
        lower, upper = [], []
        it = iter(k)
        for ax in range(1, self.eta + 1):
            if ax == i:
                lower.append(lo)
                upper.append(hi)
            else:
                kk = next(it)
                lower.append(max(1, om * (kk - 1) + 1 - grow))
                upper.append(min(L, om * kk + grow))
        return self.lattice.cube_sites(Cube(tuple(lower), tuple(upper)))

    def I(self, i: int, j: int) -> tuple:
        return (self.omega * j - self.adot + 1, self.omega * j + self.adot)


def hypercubic_partition(lattice: Lattice, omega: int, a: float) -> HypercubicPlan:
    """Cubes ``Q_m`` of side ``omega`` partitioning the hypercube ``[1:L]^eta``.

    ``omega`` must be even with ``omega >= 4 floor(a)`` (so ``r >= 0``) and
    ``omega <= L``.
    """
    if lattice.geometry != "hypercube":
        raise DecompositionError("hypercubic decomposition needs a hypercube lattice")
    if omega <= 0 or omega % 2:
        raise DecompositionError(f"Omega = {omega} must be a positive even integer")
    adot = int(math.floor(a + 1e-12))
    if omega < 4 * adot:
        raise DecompositionError(f"Omega = {omega} is below 4 floor(a) = {4 * adot}")
    if omega > lattice.L:
        raise DecompositionError(f"Omega = {omega} exceeds the edge length {lattice.L}")
    B = math.ceil(lattice.L / omega)
    cubes = {}
    for m in itertools.product(range(1, B + 1), repeat=lattice.eta):
        cubes[m] = lattice.cube_sites(Cube(tuple(omega * (mi - 1) + 1 for mi in m),
                                           tuple(omega * mi for mi in m)))
    plan = HypercubicPlan(lattice, omega, a, B, cubes)
    seen: set = set()
    ok = True
    for Q in cubes.values():
        ok &= not (seen & Q)
        seen |= Q
    plan.checks["cubes_partition"] = ok and seen == set(lattice.sites)
    if not plan.checks["cubes_partition"]:
        raise AssertionError("cubes do not partition the lattice")
    return plan


def coupling_partition(plan: HypercubicPlan, supports: Sequence) -> HypercubicPlan:
    """Classify term supports into ``Sigma_0`` (inside a cube) and the coupling sets.

    Fills ``S_ij``, ``S_ijk`` and the deduplicated ``S'_ijk`` (first in the
    lexicographic order of ``(i, lsb(k), j, k)``), and verifies the
    partition and location claims exhaustively.
    """
    eta, B = plan.eta, plan.B
    supports = sorted({region(Z) for Z in supports}, key=lambda Z: (len(Z), sorted(Z)))
    plan.supports = supports
    plan.sigma0 = [Z for Z in supports if any(Z <= Q for Q in plan.cubes.values())]
    plan.S = {Z for Z in supports if Z not in set(plan.sigma0)}
    L = plan.lattice.L
    ks = list(itertools.product(range(1, B + 1), repeat=eta - 1))
    location_ok = True
    for i in range(1, eta + 1):
        for j in range(1, B):
            A = plan.slab(i, 1, plan.omega * j)
            Bs = plan.slab(i, plan.omega * j + 1, L)
            Sij = {Z for Z in supports if Z & A and Z & Bs}
            plan.S_ij[(i, j)] = Sij
            lo, hi = plan.I(i, j)
            for k in ks:
                Q = plan.surface(i, k, lo, hi)
                Sijk = {Z for Z in Sij if Z & Q}
                plan.S_ijk[(i, j, k)] = Sijk
                env = plan.surface(i, k, lo, hi, grow=plan.adot)
                location_ok &= all(Z <= env for Z in Sijk)
    union_ij = set().union(*plan.S_ij.values()) if plan.S_ij else set()
    plan.order = sorted(plan.S_ijk, key=lambda u: (u[0], lsb(u[2]), u[1], u[2]))
    assigned: set = set()
    for u in plan.order:
        plan.S_prime[u] = sorted(plan.S_ijk[u] - assigned, key=lambda Z: (len(Z), sorted(Z)))
        assigned |= plan.S_ijk[u]
    flat = [Z for u in plan.order for Z in plan.S_prime[u]]
    plan.checks.update(
        S_equals_union_Sij=union_ij == plan.S,
        Sij_covered_by_Sijk=all(
            plan.S_ij[(i, j)] == set().union(*(plan.S_ijk[(i, j, k)] for k in ks))
            for (i, j) in plan.S_ij),
        S_prime_partition=len(flat) == len(set(flat)) and set(flat) == plan.S,
        S_prime_subset=all(set(plan.S_prime[u]) <= plan.S_ijk[u] for u in plan.order),
        Sijk_location=location_ok,
        Xi=len(plan.order) == plan.Xi,
    )
    bad = [k for k, v in plan.checks.items() if not v]
    if bad:
        raise AssertionError(f"coupling partition checks failed: {bad}")
    return plan


def correction_layout(plan: HypercubicPlan) -> HypercubicPlan:
    """Regions ``Y_u``, ``R_u = B^o_r(Y_u) cup Y_u`` and extensions ``barR_u`` over ``Sigma_u``.

    Verifies the slab/surface containment of every ``barR_u`` and the two
    disjointness rules (equal direction ``i``): different ``j``, or different
    ``k`` with equal ``lsb(k)``.
    """
    lat = plan.lattice
    sigma = list(plan.sigma0)
    contain_ok = True
    for u in plan.order:
        sigma += plan.S_prime[u]
        Z = plan.S_prime[u]
        if not Z:
            plan.Y[u] = plan.R[u] = plan.barR[u] = frozenset()
            continue
        Yu = frozenset().union(*Z)
        Ru = (lat.ball(Yu, plan.r) if plan.r > 0 else frozenset()) | Yu
        barR = extension(sigma, Ru) | Ru
        plan.Y[u], plan.R[u], plan.barR[u] = Yu, Ru, barR
        i, j, k = u
        om = plan.omega
        box = plan.surface(i, k, om * j - om // 2 + 1, om * j + om // 2, grow=om // 2)
        contain_ok &= barR <= box
    pair_ok = {"j": True, "k_lsb": True}
    counts = {"j": 0, "k_lsb": 0}
    for u, w in itertools.combinations(plan.order, 2):
        if u[0] != w[0]:
            continue
        overlap = bool(plan.barR[u] & plan.barR[w])
        if u[1] != w[1]:
            counts["j"] += 1
            pair_ok["j"] &= not overlap
        if u[2] != w[2] and lsb(u[2]) == lsb(w[2]):
            counts["k_lsb"] += 1
            pair_ok["k_lsb"] &= not overlap
    plan.checks.update(containment=contain_ok, disjoint_j=pair_ok["j"],
                       disjoint_k_lsb=pair_ok["k_lsb"], pairs_checked=counts)
    if not (contain_ok and pair_ok["j"] and pair_ok["k_lsb"]):
        raise AssertionError(f"correction layout checks failed: {plan.checks}")
    return plan


def make_hypercubic_plan(H: LocalHamiltonian, omega: int, a: float | None = None) -> HypercubicPlan:
    if a is None:
        a = structural_params(H).a
    plan = hypercubic_partition(H.lattice, omega, a)
    coupling_partition(plan, H.supports)
    return correction_layout(plan)


def hypercubic_decomposition(H: LocalHamiltonian, plan: HypercubicPlan, t: float, s: float = 0.0,
                             q: float = 0.5, params: StructuralParams | None = None,
                             method: str = "magnus", verify: bool = False) -> DecomposedEvolution:
    """``V = V'_Xi ... V'_1 U^{H_Q}_{ts}`` with per-cube propagators and ordered corrections.

    Correction ``u`` removes ``F_u`` (the terms of ``S'_{omega(u)}``) from
    ``H_u`` (terms of ``Sigma_u``) and is conjugated by ``H'_u``, the terms of
    ``Sigma_u`` inside ``barR_u``.
    """
    params = params or structural_params(H)
    lat = H.lattice
    by_support = {term.support: term for term in H.terms}
    factors, layers = [], []
    cube_layer = []
    for m, Q in sorted(plan.cubes.items()):
        HQ = H.subset([by_support[Z] for Z in plan.sigma0 if Z <= Q])
        sites = tuple(sorted(Q))
        check_dim(H.dim(sites))
        cube_layer.append(len(factors))
        factors.append((sites, propagator(HQ, t, s, sites), {"cube": m}))
    layers.append(cube_layer)
    sigma = list(plan.sigma0)
    steps = []
    group = None
    for idx, u in enumerate(plan.order, start=1):
        sigma += plan.S_prime[u]
        if not plan.S_prime[u]:
            continue
        Hu = H.subset([by_support[Z] for Z in sigma])
        Fu = H.subset([by_support[Z] for Z in plan.S_prime[u]])
        res = local_correction(Hu, Fu, plan.Y[u], plan.R[u], t, s, params, q, method=method)
        if res["barR"] != plan.barR[u]:
            raise AssertionError("correction support differs from the planned extension")
        steps.append(PerturbationRemoval(idx, Fu, plan.Y[u], plan.R[u], plan.barR[u],
                                         res["V_prime"], res["bound"], res["d_a"], u))
        key = (u[0], lsb(u[2]))
        if key != group:
            layers.append([])
            group = key
        layers[-1].append(len(factors))
        factors.append((res["sites"], res["V_prime"], {"u": idx, "ijk": u, "group": key}))
    bounds = [st.bound for st in steps]
    meta = {"mode": "hypercubic", "omega": plan.omega, "B": plan.B, "Xi": plan.Xi, "r": plan.r,
            "q": q, "t": t, "s": s, "step_bounds": bounds,
            "total_bound": None if any(b is None for b in bounds) else float(sum(bounds)),
            "bond_report": bond_dimension_report(plan.omega, lat.eta, max(H.dims.values())),
            "epsilon_claim": hypercubic_epsilon(params, lat.n, plan, q, t - s)}
    out = DecomposedEvolution(factors, layers, meta, steps)
    if verify:
        _verify_hypercubic(H, plan, out, t, s)
    return out


def _verify_hypercubic(H, plan, out, t, s) -> None:
    lat = H.lattice
    by_support = {term.support: term for term in H.terms}
    U = propagator(H, t, s)
    V = out.dense(lat.sites, H.dims)
    sigma = list(plan.sigma0)
    prev = propagator(H.subset([by_support[Z] for Z in sigma]), t, s, lat.sites)
    per = []
    steps = iter(out.steps)
    for u in plan.order:
        if not plan.S_prime[u]:
            continue
        sigma += plan.S_prime[u]
        cur = propagator(H.subset([by_support[Z] for Z in sigma]), t, s, lat.sites)
        st = next(steps)
        Vu = embed(st.V_prime, tuple(sorted(st.barR)), lat.sites, H.dims)
        per.append(op_norm(cur - Vu @ prev))
        prev = cur
    out.meta["dense_error"] = op_norm(U - V)
    out.meta["dense_step_errors"] = per
    out.meta["dense_step_sum"] = float(sum(per))


def hypercubic_epsilon(params: StructuralParams, n: int, plan: HypercubicPlan, q: float,
                       dt: float) -> float | None:
    """``n c_3 exp(v |t - s| - (1 - q) Omega / (2 a))`` when ``r`` meets the size conditions."""
    a = params.a if params.a > 0 else 1.0
    if plan.r <= 0 or not is_large_enough(plan.r / a, params.kappa, q):
        return None
    c3 = 2 * plan.eta * a * params.M * math.e / params.Z
    return n * c3 * math.exp(params.v * abs(dt) - (1 - q) * plan.omega / (2 * a))


def required_omega(params: StructuralParams, n: int, t_minus_s: float, eps: float,
                   q: float = 0.5, eta: int | None = None) -> dict:
    """Smallest even ``Omega`` meeting the error condition and the size floors.

    The error condition is
    ``Omega >= (2a/(1-q)) [v |t-s| + ln(n/eps) + ln c_3]`` with
    ``c_3 = 2 eta a M e / Z``; the floors are ``Omega > 4 floor(a)`` and
    ``r = Omega/2 - 2 floor(a)`` with ``ceil(r/a)`` large enough.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = params.a if params.a > 0 else 1.0
    eta = eta if eta is not None else int(round(params.kappa)) + 1
    adot = int(math.floor(params.a + 1e-12))
    c3 = 2 * eta * a * params.M * math.e / params.Z
    rhs = (2 * a / (1 - q)) * (params.v * abs(t_minus_s) + math.log(n / eps) + math.log(c3))
    omega = max(2, 4 * adot + 2, 2 * math.ceil(max(rhs, 0) / 2 - 1e-12))
    while True:
        r = omega / 2 - 2 * adot
        if omega > 4 * adot and r > 0 and omega >= rhs - 1e-12 and is_large_enough(r / a, params.kappa, q):
            break
        omega += 2
    return {"omega_min": omega, "rhs": rhs, "c3": c3}


def bond_dimension_report(omega: int, eta: int, d: int) -> dict:
    """Natural logs of the bond-dimension bounds for ``V' U^{H_Q}``.

    ``ln_D_proof = (Omega^eta + eta 2^(eta-1) Omega (2 Omega)^(eta-1)) ln d^2`` and the
    coarser published envelope ``ln_D_envelope = eta 4^eta Omega^eta ln d``.
    """
    proof = (omega**eta + eta * 2 ** (eta - 1) * omega * (2 * omega) ** (eta - 1)) * math.log(d * d)
    envelope = eta * 4**eta * omega**eta * math.log(d)
    return {"ln_D_proof": proof, "ln_D_envelope": envelope,
            "max_cube_sites": omega**eta, "max_correction_sites": omega * (2 * omega) ** (eta - 1)}


def lattice_graph(lattice: Lattice):
    """PEPS graph whose edges join sites at distance one."""
    from .tensor_network import PepsGraph
    return PepsGraph.from_edges(lattice.sites, lattice.neighbor_pairs())


def circuit_bond_report(circuit: DecomposedEvolution, lattice: Lattice, d: int = 2) -> dict:
    from .tensor_network import circuit_to_pepo_bound
    res = circuit_to_pepo_bound(circuit.circuit(), lattice_graph(lattice), d)
    return {"global_bound_log2": res["K"] * res["L"] * 2 * math.log2(d),
            "max_edge_bound_log2": max((math.log2(v) for v in res["per_edge_bound"].values()), default=0.0),
            "K": res["K"], "L": res["L"]}


def dense_support(circuit: DecomposedEvolution, A: np.ndarray, A_support, H: LocalHamiltonian) -> frozenset:
    """Dense non-trivial support of ``V^* A V`` (small systems only)."""
    lat = H.lattice
    V = circuit.dense(lat.sites, H.dims)
    Afull = embed(A, tuple(sorted(A_support)), lat.sites, H.dims)
    return nontrivial_support(V.conj().T @ Afull @ V, lat.sites, H.dims)
