"""First-order even/odd Trotter splitting of open nearest-neighbour chains."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exact import check_dim, propagator
from .hamiltonian import HamiltonianError, LocalHamiltonian, build_model
from .linalg import apply_local, expm_herm, op_norm


@dataclass(frozen=True)
class TrotterPlan:
    """Bond groups of a chain. ``H1`` holds bonds ``(j, j+1)`` with even ``j``, ``H2`` odd ``j``.

    Bond ``j`` joins the ``j``-th and ``(j+1)``-th chain sites (1-based positions
    in ascending id order). Entries are indices into ``H.terms``.
    """

    H1_terms: tuple
    H2_terms: tuple
    single_terms: tuple = ()


def _chain_order(H: LocalHamiltonian) -> list:
    lat = H.lattice
    sites = list(lat.sites)
    for x, y in zip(sites, sites[1:]):
        if lat.distance(x, y) != 1:
            raise HamiltonianError("Hamiltonian is not on a chain in ascending site order")
    if lat.n > 1 and lat.diameter(lat.all) != lat.n - 1:
        raise HamiltonianError("lattice is not a chain")
    return sites


def split_even_odd(H: LocalHamiltonian) -> TrotterPlan:
    """Group chain bonds by the parity of their left position.

    Single-site terms are not allowed: the splitting covers nearest-neighbour
    bonds only.
    """
    sites = _chain_order(H)
    pos = {s: i + 1 for i, s in enumerate(sites)}
    h1, h2 = [], []
    for k, term in enumerate(H.terms):
        if len(term.support) != 2:
            raise HamiltonianError("Trotter splitting needs a pure nearest-neighbour chain")
        a, b = sorted(pos[s] for s in term.support)
        if b != a + 1:
            raise HamiltonianError(f"term on {term.sites} is not a nearest-neighbour bond")
        (h1 if a % 2 == 0 else h2).append(k)
    if H.is_time_dependent():
        raise HamiltonianError("Trotter splitting is implemented for time-independent chains")
    return TrotterPlan(tuple(h1), tuple(h2))


def group_dense(H: LocalHamiltonian, idx) -> np.ndarray:
    return H.subset([H.terms[k] for k in idx]).dense(0.0, H.lattice.sites)


def _group_exp(H: LocalHamiltonian, idx, tau: float) -> np.ndarray:
    """``exp(-i tau sum_{k in idx} h_k)`` built bond by bond (the bonds commute)."""
    sites = H.lattice.sites
    pos = {s: i for i, s in enumerate(sites)}
    dims = [H.dims[s] for s in sites]
    D = int(np.prod(dims))
    M = np.eye(D, dtype=complex)
    for k in idx:
        term = H.terms[k]
        mat = term.at(0.0)
        M = apply_local(expm_herm(mat, tau), [pos[s] for s in term.sites], dims, M)
    return M


def trotter_propagator(plan: TrotterPlan, H: LocalHamiltonian, t: float, L: int,
                       order: str = "12") -> np.ndarray:
    """``(exp(-i H1 tau) exp(-i H2 tau))^L`` with ``tau = t / L``.

    ``order="21"`` swaps the two factors inside each step.
    """
    if L < 1:
        raise ValueError("number of Trotter steps must be positive")
    check_dim(H.dim(H.lattice.sites))
    tau = t / L
    E1 = _group_exp(H, plan.H1_terms, tau)
    E2 = _group_exp(H, plan.H2_terms, tau)
    step = E1 @ E2 if order == "12" else E2 @ E1
    return np.linalg.matrix_power(step, L)


def commutator_norm(H: LocalHamiltonian, plan: TrotterPlan, method: str = "dense") -> float:
    """``||[H1, H2]||``, densely or as the sum of overlapping bond-pair commutator norms.

    The pairwise form is an upper bound valid for any chain length.
    """
    if method == "dense":
        A, B = group_dense(H, plan.H1_terms), group_dense(H, plan.H2_terms)
        return op_norm(A @ B - B @ A)
    total = 0.0
    for i in plan.H1_terms:
        for j in plan.H2_terms:
            ti, tj = H.terms[i], H.terms[j]
            if ti.support.isdisjoint(tj.support):
                continue
            sub = H.subset([ti, tj])
            sites = tuple(sorted(ti.support | tj.support))
            A = sub.subset([ti]).dense(0.0, sites)
            B = sub.subset([tj]).dense(0.0, sites)
            total += op_norm(A @ B - B @ A)
    return total


def required_steps(t: float, n: int, eps: float, H: LocalHamiltonian | None = None,
                   c_tilde: float | None = None, method: str = "dense") -> dict:
    """``L_min = max(1, ceil(c_tilde t^2 n / (2 eps)))`` with ``c_tilde = ||[H1, H2]|| / n``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if c_tilde is None:
        if H is None:
            raise ValueError("need a Hamiltonian or c_tilde")
        c_tilde = commutator_norm(H, split_even_odd(H), method) / n
    L = math.ceil(c_tilde * t * t * n / (2 * eps) - 1e-12)
    return {"L_min": max(1, int(L)), "c_tilde": c_tilde}


def trotter_bound(H: LocalHamiltonian, plan: TrotterPlan, t: float, L: int,
                  method: str = "dense") -> float:
    """``L tau^2 ||[H1, H2]|| / 2``."""
    tau = t / L
    return L * tau * tau * commutator_norm(H, plan, method) / 2


def scan_row(model: str, n: int, t: float, L: int, coupling: float = 1.0) -> dict:
    H = build_model(model, n, [coupling])
    plan = split_even_odd(H)
    U = propagator(H, t, 0.0)
    UT = trotter_propagator(plan, H, t, L)
    return {"n": n, "error": op_norm(U - UT), "bound": trotter_bound(H, plan, t, L)}


def error_scan(model: str = "heisenberg_chain", n_range=range(2, 11), t: float | None = None,
               L: int = 200, coupling: float = 1.0, workers: int = 1) -> list:
    """Exact Trotter error and first-order bound for each chain length.

    ``t`` defaults to ``11 / (9 J)`` with ``J`` the per-bond operator norm.
    Lengths above the dense cap are dropped with a warning.
    """
    if t is None:
        t = 11.0 / (9.0 * coupling)
    ns = []
    for n in n_range:
        try:
            check_dim(2**n)
            ns.append(n)
        except Exception:
            warnings.warn(f"skipping n={n}: above the dense dimension cap")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda n: scan_row(model, n, t, L, coupling), ns))
    return [scan_row(model, n, t, L, coupling) for n in ns]


def linear_fit(x, y) -> dict:
    """Least-squares line with coefficient of determination."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}
