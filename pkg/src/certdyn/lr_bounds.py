"""Closed-form Lieb-Robinson truncation bounds and their dense verification.

The central quantity is the error made by evolving a local observable ``A``
(supported on ``Y``) under only the terms inside the extension of a region
``R`` instead of the full Hamiltonian. With ``d_a = d(Y, Lambda \\ R) / a`` and
``k = ceil(d_a)`` the bound reads::

    (2 M / Z) ||A|| k^kappa exp(v |t| - k),        valid when k > 2 kappa + 1.

A simpler exponential form uses ``D = (1 - q) d_a`` and a prefactor
``alpha_q = exp(-(1 - q)(k - d_a))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exact import embed, heisenberg_evolve
from .hamiltonian import LocalHamiltonian, StructuralParams, velocity
from .lattice import region
from .linalg import op_norm

__all__ = [
    "BoundNotApplicable", "InfeasibleTolerance", "TruncationPlan", "make_plan", "velocity",
    "quasilocality_bound", "simplified_bound", "required_distance",
    "approx_observable_requirement", "empirical_truncation_error", "is_large_enough",
    "ceil_da", "c1", "poly_exp_threshold", "log_linear_gap",
]


class BoundNotApplicable(ValueError):
    """The bound's precondition fails for this configuration."""


class InfeasibleTolerance(BoundNotApplicable):
    """The requested tolerance cannot be met (e.g. ``Gamma gamma >= I``)."""


def ceil_da(d_a: float) -> int:
    """``ceil(d_a)`` robust to float noise just above an integer."""
    return int(math.ceil(d_a - 1e-12))


def poly_exp_threshold(n: float, a: float) -> float:
    """``max(0, (2n/a) ln(n/a))``: beyond this point ``x^n exp(-a x) <= 1``.

    ``n = 0`` gives 0 (the power is constant).
    """
    if a <= 0 or n < 0:
        raise ValueError("need a > 0 and n >= 0")
    if n <= a:
        # ln(n/a) <= 0; also avoids n/a underflowing to 0 for tiny n
        return 0.0
    return (2 * n / a) * math.log(n / a)


def log_linear_gap(x: float) -> float:
    """``x/2 - (1 - ln 2) - ln x``; non-negative for ``x > 0`` and zero only at ``x = 2``."""
    if x <= 0:
        raise ValueError("x must be positive")
    return x / 2 - (1 - math.log(2)) - math.log(x)


def is_large_enough(d_a: float, kappa: float, q: float) -> bool:
    """``ceil(d_a) > 2 kappa + 1`` and ``ceil(d_a) >= (2 kappa / q) ln(kappa / q)``."""
    if math.isinf(d_a):
        return True
    k = ceil_da(d_a)
    return k > 2 * kappa + 1 and k >= poly_exp_threshold(kappa, q)


def min_large_enough_ceiling(kappa: float, q: float) -> int:
    """Smallest integer ``k`` for which ``ceil(d_a) = k`` is large enough."""
    k = int(math.floor(2 * kappa + 1)) + 1
    return max(k, int(math.ceil(poly_exp_threshold(kappa, q))))


def c1(params: StructuralParams) -> float:
    return math.log(2 * params.M / params.Z)


@dataclass(frozen=True)
class TruncationPlan:
    """Geometry of one truncation: ``Y <= R``, ``barR`` and the derived lengths."""

    Y: frozenset
    R: frozenset
    barR: frozenset
    d_a: float
    q: float
    D: float
    alpha_q: float
    large_enough: bool


def make_plan(H: LocalHamiltonian, params: StructuralParams, Y, R, q: float = 0.5) -> TruncationPlan:
    """Build the truncation plan for observable support ``Y`` and region ``R``."""
    Y, R = region(Y), region(R)
    if not Y:
        raise ValueError("observable support must be non-empty")
    if not Y <= R:
        raise ValueError("Y must be a subset of R")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    a = params.a if params.a > 0 else 1.0
    d_a = H.lattice.distance_to_complement(Y, R) / a
    return plan_from_distance(Y, R, H.extension(R), d_a, params.kappa, q)


def plan_from_distance(Y, R, barR, d_a: float, kappa: float, q: float) -> TruncationPlan:
    if math.isinf(d_a):
        return TruncationPlan(Y, R, barR, d_a, q, math.inf, 1.0, True)
    D = (1 - q) * d_a
    alpha = math.exp(-(1 - q) * (ceil_da(d_a) - d_a))
    return TruncationPlan(Y, R, barR, d_a, q, D, alpha, is_large_enough(d_a, kappa, q))


def quasilocality_bound(params: StructuralParams, normA: float, t: float, plan: TruncationPlan) -> float:
    """``(2M/Z) ||A|| ceil(d_a)^kappa exp(v|t| - ceil(d_a))``.

    Raises:
        BoundNotApplicable: if ``ceil(d_a) <= 2 kappa + 1``.
    """
    if normA == 0 or math.isinf(plan.d_a):
        return 0.0
    k = ceil_da(plan.d_a)
    if not k > 2 * params.kappa + 1:
        raise BoundNotApplicable(
            f"ceil(d_a) = {k} does not exceed 2 kappa + 1 = {2 * params.kappa + 1:g}")
    return (2 * params.M / params.Z) * normA * k**params.kappa * math.exp(params.v * abs(t) - k)


def simplified_bound(params: StructuralParams, normA: float, t: float, plan: TruncationPlan) -> dict:
    """``(2 M alpha_q / Z) ||A|| exp(v|t| - D)`` for a large-enough plan."""
    if not plan.large_enough:
        raise BoundNotApplicable("ceil(d_a) is not large enough for the exponential form")
    if normA == 0 or math.isinf(plan.d_a):
        return {"bound": 0.0, "alpha_q": plan.alpha_q}
    val = (2 * params.M * plan.alpha_q / params.Z) * normA * math.exp(params.v * abs(t) - plan.D)
    return {"bound": val, "alpha_q": plan.alpha_q}


def required_distance(params: StructuralParams, normA: float, t: float, eps: float,
                      q: float = 0.5) -> dict:
    """Smallest ``D`` (and ``d_a``) for which the exponential bound is at most ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cc = c1(params)
    D_min = params.v * abs(t) + math.log(1 / eps) + (math.log(normA) if normA > 0 else -math.inf) + cc
    D_min = max(D_min, 0.0)
    d_a_min = max(D_min / (1 - q), float(min_large_enough_ceiling(params.kappa, q)))
    return {"D_min": D_min, "d_a_min": d_a_min, "c1": cc, "v": params.v}


def approx_observable_requirement(Gamma: int, gamma: float, I: float, params: StructuralParams,
                                  t: float, q: float = 0.5, f: Callable | None = None,
                                  n: int | None = None) -> dict:
    """Length scale making a sum of ``Gamma`` truncated unit-norm observables ``delta``-accurate.

    Without ``f``: ``D_min = v|t| + ln(2 Gamma / (I - Gamma gamma)) + c1``.
    With ``f`` (``1 <= f(D) <= n / Gamma``): the smallest ``D`` satisfying
    ``D + ln f(D) >= v|t| + ln(2 n / (I - n gamma)) + c1``, found by bisection.
    ``delta = (I - Gamma gamma) / 2`` in both cases.
    """
    if Gamma * gamma >= I:
        raise InfeasibleTolerance(f"tolerance infeasible: Gamma*gamma = {Gamma * gamma:g} >= I = {I:g}")
    cc = c1(params)
    delta = 0.5 * (I - Gamma * gamma)
    if f is None:
        D_min = params.v * abs(t) + math.log(2 * Gamma / (I - Gamma * gamma)) + cc
        return {"D_min": D_min, "delta": delta, "c1": cc}
    n = Gamma if n is None else n
    if n * gamma >= I:
        raise InfeasibleTolerance(f"tolerance infeasible: n*gamma = {n * gamma:g} >= I = {I:g}")
    target = params.v * abs(t) + math.log(2 * n / (I - n * gamma)) + cc

    def lhs(D):
        return D + math.log(max(1.0, f(D)))

    D_min = bisect_threshold(lhs, target)
    return {"D_min": D_min, "delta": delta, "c1": cc, "target": target}


def bisect_threshold(g: Callable[[float], float], target: float, tol: float = 1e-12) -> float:
    """Smallest ``D >= 0`` with ``g(D) >= target`` for non-decreasing ``g``.

    ``g`` may be piecewise constant in a term (e.g. floors); the result is
    the left end of the feasible set up to ``tol``.
    """
    lo, hi = 0.0, max(1.0, target)
    if g(lo) >= target:
        return 0.0
    while g(hi) < target:
        hi *= 2
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if g(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def empirical_truncation_error(H: LocalHamiltonian, A: np.ndarray, Y, R, t: float,
                               params: StructuralParams | None = None, q: float = 0.5) -> dict:
    """Dense ``||tau^H_t(A) - tau^{H_barR}_t(A)||`` together with the bound when applicable.

    ``A`` is given on ``Y`` (ascending site order). The truncated evolution is
    computed on ``barR`` only and then embedded.
    """
    Y, R = region(Y), region(R)
    if params is None:
        from .hamiltonian import structural_params
        params = structural_params(H)
    plan = make_plan(H, params, Y, R, q)
    sites = H.lattice.sites
    full = heisenberg_evolve(H, A, t, 0.0, support=Y)
    sub_sites = tuple(sorted(plan.barR | Y))
    HR = H.restrict(plan.barR)
    local = heisenberg_evolve(HR, A, t, 0.0, support=Y, sites=sub_sites)
    trunc = embed(local, sub_sites, sites, H.dims)
    err = op_norm(full - trunc)
    normA = op_norm(A)
    try:
        bound = quasilocality_bound(params, normA, t, plan)
    except BoundNotApplicable:
        bound = None
    return {"exact_error": err, "bound": bound,
            "satisfied": None if bound is None else bool(err <= bound),
            "plan": plan}
