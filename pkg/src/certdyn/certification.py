"""Parent-Hamiltonian fidelity witnesses for time-evolved product states.

For a product state and a partition ``Y_1..Y_Gamma`` of the sites the terms
``g_i(0) = 1 - |phi_{Y_i}><phi_{Y_i}|`` sum to an observable with spectrum
``{0..Gamma}`` whose unique ground state is the product state. Evolving the
terms gives a parent Hamiltonian for the evolved state; evolving each term
only under the Hamiltonian restricted to ``barR_i`` gives a local witness whose
expectation value, plus a slack ``delta``, bounds the infidelity.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exact import check_dim, embed, heisenberg_evolve, pure_trace_distance
from .hamiltonian import LocalHamiltonian, StructuralParams
from .lattice import Cube, Lattice, region
from .linalg import apply_local, op_norm, partial_trace
from .lr_bounds import (InfeasibleTolerance, approx_observable_requirement, ceil_da,
                        min_large_enough_ceiling)


class CertificationError(ValueError):
    """Invalid witness input."""


@dataclass
class WitnessSpec:
    """Inputs of a witness: product state, partition, regions and time."""

    vectors: dict
    partition: list
    regions: list
    t: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.partition = [region(Y) for Y in self.partition]
        self.regions = [region(R) for R in self.regions]
        if len(self.regions) != len(self.partition):
            raise CertificationError("need one region per partition block")
        seen = set()
        for Y, R in zip(self.partition, self.regions):
            if not Y:
                raise CertificationError("empty partition block")
            if seen & Y:
                raise CertificationError("partition blocks overlap")
            seen |= Y
            if not Y <= R:
                raise CertificationError("each block must lie inside its region")
        if seen != set(self.vectors):
            raise CertificationError("partition does not cover exactly the state's sites")
        for s, v in self.vectors.items():
            if abs(np.linalg.norm(v) - 1) > 1e-10:
                raise CertificationError(f"site vector for {s} is not normalized")


@dataclass
class Witness:
    """List of ``(support, matrix)`` terms; ``kind`` is ``exact``, ``truncated`` or ``product``."""

    terms: list
    kind: str

    @property
    def Gamma(self) -> int:
        return len(self.terms)

    def dense(self, sites: Sequence[int], dims) -> np.ndarray:
        sites = tuple(sorted(sites))
        D = int(np.prod([dims[s] for s in sites]))
        G = np.zeros((D, D), dtype=complex)
        for support, mat in self.terms:
            G += embed(mat, support, sites, dims)
        return G


@dataclass
class Certificate:
    """Witness value and derived infidelity bound for a state ``rho``."""

    E_rho: float
    E0: float
    E1: float
    beta: float
    delta: float
    I_target: float | None
    bound: float
    per_term: list
    measurement_stats: dict | None = None
    target: str = "psi(t)"


def _block_vector(vectors: dict, Y) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for s in sorted(Y):
        out = np.kron(out, np.asarray(vectors[s], dtype=complex))
    return out


def product_parent(vectors: dict, partition: Sequence) -> Witness:
    """Terms ``1 - |phi_Y><phi_Y|`` on each block ``Y``."""
    terms = []
    for Y in partition:
        phi = _block_vector(vectors, Y)
        if abs(np.linalg.norm(phi) - 1) > 1e-10:
            raise CertificationError("site vectors must be normalized")
        terms.append((tuple(sorted(Y)), np.eye(len(phi)) - np.outer(phi, phi.conj())))
    return Witness(terms, "product")


def evolved_witness(spec: WitnessSpec, H: LocalHamiltonian, exact: bool = True) -> dict:
    """Exact terms ``tau^H_t(g_i(0))`` on all sites and truncated ``tau^{H_barR}_t(g_i(0))`` on ``barR_i``."""
    base = product_parent(spec.vectors, spec.partition)
    sites = H.lattice.sites
    out = {}
    if exact:
        check_dim(H.dim(sites))
        out["exact"] = Witness([(sites, heisenberg_evolve(H, g, spec.t, 0.0, support=Y))
                                for Y, g in base.terms], "exact")
    trunc = []
    for (Y, g), R in zip(base.terms, spec.regions):
        barR = H.extension(R) | set(Y)
        sub = tuple(sorted(barR))
        check_dim(H.dim(sub))
        HR = H.restrict(barR)
        trunc.append((sub, heisenberg_evolve(HR, g, spec.t, 0.0, support=Y, sites=sub)))
    out["truncated"] = Witness(trunc, "truncated")
    return out


def infidelity_bound(E_rho: float, E0: float, E1: float, trace_distance: float | None = None,
                     normG: float | None = None) -> dict:
    """``beta = (E_rho - E0) / (E1 - E0)`` and optionally the worst case ``||rho - psi||_1 ||G|| / gap``."""
    if not E1 > E0:
        raise CertificationError("gap nonpositive: E1 <= E0")
    out = {"beta": (E_rho - E0) / (E1 - E0)}
    if trace_distance is not None and normG is not None:
        out["worst_case"] = trace_distance * normG / (E1 - E0)
    return out


def delta_value(I: float, Gamma: int, gamma: float) -> float:
    return 0.5 * (I - Gamma * gamma)


def delta_prime_value(I: float, Gamma: int, gamma: float) -> float:
    return (I - gamma * Gamma) / (2 * (1 + I))


def _density(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        return np.outer(rho, rho.conj())
    return rho


def validate_density(rho: np.ndarray, tol: float = 1e-9) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise CertificationError("density matrix must be square")
    if abs(np.trace(rho) - 1) > tol:
        raise CertificationError("density matrix must have unit trace")
    if not np.allclose(rho, rho.conj().T, atol=tol):
        raise CertificationError("density matrix must be Hermitian")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -tol:
        raise CertificationError("density matrix must be positive semidefinite")


def term_expectations(rho, witness: Witness, sites: Sequence[int], dims) -> list:
    """``Tr(rho g_i)`` from the reduced state of ``rho`` on each term's support."""
    sites = tuple(sorted(sites))
    pos = {s: i for i, s in enumerate(sites)}
    dl = [dims[s] for s in sites]
    rho = np.asarray(rho)
    out = []
    for support, mat in witness.terms:
        keep = [pos[s] for s in support]
        if rho.ndim == 1:
            T = rho.reshape(dl)
            others = [i for i in range(len(sites)) if i not in keep]
            M = np.transpose(T, keep + others).reshape(int(np.prod([dl[k] for k in keep])), -1)
            red = M @ M.conj().T
        else:
            red = partial_trace(rho, keep, dl)
        out.append(float(np.real(np.trace(red @ mat))))
    return out


def certify_state(rho, truncated: Witness, delta: float, sites: Sequence[int], dims,
                  I_target: float | None = None, validate: bool = True) -> Certificate:
    """Certificate ``Tr(rho G') + delta`` for the infidelity with the evolved state."""
    if validate:
        validate_density(_density(rho) if np.asarray(rho).ndim == 2 else _density(rho))
    per = term_expectations(rho, truncated, sites, dims)
    E = float(sum(per))
    return Certificate(E_rho=E, E0=0.0, E1=1.0, beta=E, delta=delta, I_target=I_target,
                       bound=E + delta, per_term=per)


def approx_witness_analysis(exact: Witness, truncated: Witness, delta_prime: float, psi_t,
                            sites: Sequence[int], dims) -> dict:
    """Dense spectrum of ``G'`` compared against the perturbation guarantees.

    Returns measured quantities, the guaranteed envelopes and a callable
    ``certificate_vs_psi_prime(rho)`` giving ``(Tr(rho G') + delta') / (1 - 2 delta')``.
    """
    if not 0 <= delta_prime < 0.5:
        raise CertificationError("delta' must lie in [0, 1/2)")
    G = exact.dense(sites, dims)
    Gp = truncated.dense(sites, dims)
    dist = op_norm(G - Gp)
    w, V = np.linalg.eigh((Gp + Gp.conj().T) / 2)
    wG = np.linalg.eigvalsh((G + G.conj().T) / 2)
    psi_p = V[:, 0]
    overlap = abs(np.vdot(psi_t, psi_p))
    gap = float(w[1] - w[0])
    shift = float(np.max(np.abs(np.sort(w) - np.sort(wG))))

    def certificate(rho) -> float:
        r = _density(rho)
        return (float(np.real(np.trace(r @ Gp))) + delta_prime) / (1 - 2 * delta_prime)

    return {
        "G_minus_Gp": dist,
        "E0p": float(w[0]), "E1p": float(w[1]), "gap": gap,
        "gap_bound": 1 - 2 * delta_prime,
        "overlap": overlap,
        "overlap_bound": 1 - delta_prime / (1 - delta_prime),
        "trace_distance": pure_trace_distance(psi_t, psi_p),
        "trace_bound": 2 * math.sqrt(2 * delta_prime / (1 - delta_prime)),
        "trace_bound_simple": 4 * math.sqrt(delta_prime),
        "max_eigen_shift": shift,
        "psi_prime": psi_p,
        "certificate_vs_psi_prime": certificate,
    }


# region planning

def plan_regions(lattice: Lattice, params: StructuralParams, t: float, I: float,
                 gamma: float | None = None, partition_style="singleton", q: float = 0.5,
                 H: LocalHamiltonian | None = None, vectors: dict | None = None) -> WitnessSpec:
    """Choose partition and regions so that the witness meets infidelity target ``I``.

    ``partition_style="singleton"`` uses one block per site. ``"cubes"`` (hypercube
    lattices) uses cubes of side ``floor(D a)``, with ``D`` solving the
    improved condition by bisection.
    ``gamma`` defaults to ``I / (2 n)``. The product state defaults to all
    sites in the first basis vector.
    """
    n = lattice.n
    if gamma is None:
        gamma = I / (2 * n)
    a = params.a if params.a > 0 else 1.0
    if partition_style == "singleton":
        req = approx_observable_requirement(n, gamma, I, params, t, q)
        partition = [frozenset([s]) for s in lattice.sites]
        D = req["D_min"]
    elif partition_style == "cubes":
        if lattice.geometry != "hypercube":
            raise CertificationError("cube partition needs a hypercube lattice")
        eta, L = lattice.eta, lattice.L

        def f(D):
            return (math.floor(D * a) / 2) ** eta

        req = approx_observable_requirement(n, gamma, I, params, t, q, f=f, n=n)
        D = req["D_min"]
        omega = min(max(1, math.floor(D * a)), L)
        B = math.ceil(L / omega)
        partition = []
        for m in itertools.product(range(1, B + 1), repeat=eta):
            cube = Cube(tuple(omega * (mi - 1) + 1 for mi in m), tuple(omega * mi for mi in m))
            partition.append(lattice.cube_sites(cube))
    else:
        raise CertificationError(f"unknown partition style {partition_style!r}")
    Gamma = len(partition)
    if Gamma * gamma >= I:
        raise InfeasibleTolerance("tolerance infeasible for this partition")
    d_a = max(D / (1 - q), float(min_large_enough_ceiling(params.kappa, q)))
    # with an integer metric any open ball radius in (k-1, k] is the same ball
    radius = d_a * a
    regions = [lattice.ball(Y, radius) for Y in partition]
    if vectors is None:
        vectors = {s: np.eye(2)[0] for s in lattice.sites}
    barR = [H.extension(R) if H is not None else R for R in regions]
    meta = {"D": D, "d_a": d_a, "Gamma": Gamma, "gamma": gamma, "I": I,
            "delta": delta_value(I, Gamma, gamma), "radius": radius,
            "max_barR": max(len(b) for b in barR), "ceil_d_a": ceil_da(d_a)}
    return WitnessSpec(vectors, partition, regions, t, meta)


# measurement simulation

_PAULI_BASIS = {
    # rows are the +1 and -1 eigenvectors (conjugated) of X, Y, Z
    0: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    1: np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2),
    2: np.eye(2, dtype=complex),
}

# maps (m00, m01, m10, m11) to Pauli coefficients (I, X, Y, Z) of a 2x2 matrix
_PAULI_TRANSFORM = 0.5 * np.array([
    [1, 0, 0, 1],
    [0, 1, 1, 0],
    [0, 1j, -1j, 0],
    [1, 0, 0, -1],
])


def pauli_coefficients(M: np.ndarray, k: int) -> np.ndarray:
    """Coefficients ``c[P]`` with ``M = sum_P c[P] P``; shape ``(4,)*k`` over (I, X, Y, Z)."""
    T = np.asarray(M, dtype=complex).reshape((2,) * (2 * k))
    perm = [x for j in range(k) for x in (j, k + j)]
    T = T.transpose(perm).reshape((4,) * k)
    for j in range(k):
        T = np.moveaxis(np.tensordot(_PAULI_TRANSFORM, T, axes=([1], [j])), 0, j)
    return T


def _setting_estimates(coeffs: np.ndarray, setting: tuple, k: int) -> np.ndarray:
    """Estimator value for each outcome of a Pauli setting (outcome bit 0 means eigenvalue +1)."""
    outcomes = np.array(list(itertools.product([1, -1], repeat=k)), dtype=float).reshape(-1, k)
    est = np.zeros(len(outcomes))
    for T in itertools.product([False, True], repeat=k):
        idx = tuple(setting[j] + 1 if T[j] else 0 for j in range(k))
        c = coeffs[idx]
        if c == 0:
            continue
        w = 3.0 ** sum(T)
        sign = np.prod(outcomes[:, list(np.flatnonzero(T))], axis=1) if any(T) else 1.0
        est += np.real(c) * w * sign
    return est


def _setting_probs(rho_R: np.ndarray, setting: tuple, k: int) -> np.ndarray:
    M = rho_R
    for j, s in enumerate(setting):
        M = apply_local(_PAULI_BASIS[s], [j], [2] * k, M)
        M = apply_local(_PAULI_BASIS[s], [j], [2] * k, M.conj().T).conj().T
    p = np.clip(np.real(np.diag(M)), 0, None)
    return p / p.sum()


def simulate_measurements(rho, truncated: Witness, shots_per_term: int, seed: int,
                          sites: Sequence[int], dims, allocation: str = "random") -> dict:
    """Estimate ``Tr(rho G')`` from simulated single-qubit Pauli measurements.

    For each term, every shot measures each qubit of the term's support in a
    Pauli basis. With ``allocation="random"`` the basis string is uniform per
    shot; ``"stratified"`` splits the shots evenly over all ``3^k`` strings.
    Outcomes are reweighted by ``3^{|P|}`` per Pauli string ``P`` so that the
    estimator is unbiased.
    """
    if shots_per_term < 1:
        raise CertificationError("need at least one shot per term")
    if any(dims[s] != 2 for s in sites):
        raise CertificationError("measurement simulation supports qubits only")
    rng = np.random.default_rng(seed)
    sites = tuple(sorted(sites))
    pos = {s: i for i, s in enumerate(sites)}
    dl = [2] * len(sites)
    rho = _density(rho)
    total, var_total, per = 0.0, 0.0, []
    for support, mat in truncated.terms:
        k = len(support)
        red = partial_trace(rho, [pos[s] for s in support], dl)
        coeffs = pauli_coefficients(mat, k)
        settings = list(itertools.product(range(3), repeat=k))
        if allocation == "random":
            counts = rng.multinomial(shots_per_term, np.full(len(settings), 1 / len(settings)))
            values = []
            for s, m in zip(settings, counts):
                if m == 0:
                    continue
                probs = _setting_probs(red, s, k)
                est = _setting_estimates(coeffs, s, k)
                outs = rng.multinomial(m, probs)
                values.append((est, outs))
            n_tot = sum(int(o.sum()) for _, o in values)
            mean = sum(float(e @ o) for e, o in values) / n_tot
            sq = sum(float((e - mean) ** 2 @ o) for e, o in values)
            var = sq / (n_tot - 1) / n_tot if n_tot > 1 else math.inf
        elif allocation == "stratified":
            m_each, extra = divmod(shots_per_term, len(settings))
            if m_each == 0:
                raise CertificationError("stratified allocation needs at least 3^k shots per term")
            mean, var = 0.0, 0.0
            for idx, s in enumerate(settings):
                m = m_each + (1 if idx < extra else 0)
                probs = _setting_probs(red, s, k)
                est = _setting_estimates(coeffs, s, k)
                outs = rng.multinomial(m, probs)
                mu = float(est @ outs) / m
                v = float((est - mu) ** 2 @ outs) / (m - 1) if m > 1 else 0.0
                mean += mu / len(settings)
                var += v / m / len(settings) ** 2
        else:
            raise CertificationError(f"unknown allocation {allocation!r}")
        per.append({"estimate": mean, "std_error": math.sqrt(var)})
        total += mean
        var_total += var
    return {"E_rho_hat": total, "std_error": math.sqrt(var_total), "per_term": per}


def random_product_vectors(sites: Sequence[int], rng: np.random.Generator, d: int = 2) -> dict:
    out = {}
    for s in sites:
        v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        out[s] = v / np.linalg.norm(v)
    return out
