"""Dense exact-simulation oracle.

Everything here is brute force on the full (or a sub-) Hilbert space: matrix
exponentials come from Hermitian eigendecompositions, time-ordered products are
exact for piecewise-constant schedules. Site order is big-endian in ascending
site id.
"""
from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hamiltonian import LocalHamiltonian
from .linalg import embed_matrix, expm_herm, op_norm, partial_trace, trace_norm

MAGIC = b"CDYNDNS1"

# tolerances for the interaction-picture checks
EXPECTATION_TOL = 1e-9     # <psi_D|A_D|psi_D> against <psi|A|psi>
COMPOSITION_TOL = 1e-9     # U_ts against U_tr U_rs
DIRAC_RESIDUAL_TOL = 1e-6  # central difference with h = 1e-5


class DimensionCapExceeded(RuntimeError):
    """The dense space is larger than the configured cap."""


def dim_cap() -> int:
    return int(os.environ.get("CERTDYN_DIM_CAP", 2**14))


def check_dim(D: int) -> None:
    cap = dim_cap()
    if D > cap:
        raise DimensionCapExceeded(
            f"dense dimension {D} exceeds cap {cap}; use fewer sites or raise CERTDYN_DIM_CAP")


@dataclass
class DenseState:
    """State vector with its site list (big-endian order)."""

    amplitudes: np.ndarray
    sites: tuple

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class DenseOperator:
    """Matrix with the sites it is written on (``support``)."""

    matrix: np.ndarray
    support: tuple

    def to_json(self) -> str:
        return json.dumps({"support": list(self.support), "matrix": encode_complex(self.matrix)})

    @classmethod
    def from_json(cls, text: str) -> "DenseOperator":
        d = json.loads(text)
        return cls(decode_complex(d["matrix"]), tuple(d["support"]))


def encode_complex(a: np.ndarray):
    """Nested lists with complex entries as ``[re, im]`` pairs."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def dump_binary(a: np.ndarray, path) -> None:
    """Write ``magic | ndim | shape | interleaved re/im`` (little-endian)."""
    a = np.ascontiguousarray(a, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.astype("<c16").tobytes())


def load_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a dense dump (bad magic)")
        (ndim,) = struct.unpack("<Q", fh.read(8))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: truncated dense dump")
    return data.reshape(shape).astype(np.complex128)


# embedding and propagation

def _sites_of(H: LocalHamiltonian, sites) -> tuple:
    return tuple(sorted(sites)) if sites is not None else H.lattice.sites


def embed(op: np.ndarray, support: Sequence[int], sites: Sequence[int], dims) -> np.ndarray:
    """Embed ``op`` (factor order = ascending ``support``) into the space of ``sites``.

    ``dims`` maps site id to local dimension.
    """
    sites = tuple(sorted(sites))
    support = tuple(sorted(support))
    pos = {s: i for i, s in enumerate(sites)}
    missing = [s for s in support if s not in pos]
    if missing:
        raise ValueError(f"support sites {missing} not in target space")
    sub = int(np.prod([dims[s] for s in support])) if support else 1
    if np.shape(op) != (sub, sub):
        raise ValueError(f"operator shape {np.shape(op)} does not match support dimension {sub}")
    D = int(np.prod([dims[s] for s in sites]))
    check_dim(D)
    if not support:
        return complex(np.asarray(op).reshape(())) * np.eye(D, dtype=complex)
    return embed_matrix(op, [pos[s] for s in support], [dims[s] for s in sites])


def time_slices(H: LocalHamiltonian, t: float, s: float) -> list:
    """Sub-intervals of ``[min, max]`` on which ``H`` is constant, in ascending time."""
    lo, hi = min(s, t), max(s, t)
    cuts = [lo] + [b for b in H.breakpoints() if lo < b < hi] + [hi]
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def propagator(H: LocalHamiltonian, t: float, s: float, sites=None) -> np.ndarray:
    """``U_ts`` solving ``d/dt U_ts = -i H(t) U_ts`` with ``U_ss = 1``."""
    sites = _sites_of(H, sites)
    D = H.dim(sites)
    check_dim(D)
    if t == s:
        return np.eye(D, dtype=complex)
    if t < s:
        return propagator(H, s, t, sites).conj().T
    U = np.eye(D, dtype=complex)
    for a, b in time_slices(H, t, s):
        eig = H.eig(0.5 * (a + b), sites)
        U = expm_herm(None, b - a, eig) @ U
    return U


def heisenberg_evolve(H: LocalHamiltonian, A: np.ndarray, t: float, s: float = 0.0,
                      support=None, sites=None) -> np.ndarray:
    """``U_ts A U_st`` on ``sites``; ``A`` may be given on ``support`` only."""
    sites = _sites_of(H, sites)
    if support is not None:
        A = embed(A, support, sites, H.dims)
    U = propagator(H, t, s, sites)
    return U @ A @ U.conj().T


def evolve_state(H: LocalHamiltonian, psi: np.ndarray, t: float, s: float = 0.0, sites=None) -> np.ndarray:
    return propagator(H, t, s, sites) @ psi


def product_state(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for v in vectors:
        out = np.kron(out, np.asarray(v, dtype=complex))
    return out


# norms and fidelities

def fidelity(psi: np.ndarray, rho_or_phi: np.ndarray) -> float:
    """``<psi|rho|psi>`` for a density matrix, ``|<psi|phi>|^2`` for a vector."""
    x = np.asarray(rho_or_phi)
    if x.ndim == 1:
        return float(abs(np.vdot(psi, x)) ** 2)
    return float(np.real(np.vdot(psi, x @ psi)))


def infidelity(psi: np.ndarray, rho_or_phi: np.ndarray) -> float:
    return 1.0 - fidelity(psi, rho_or_phi)


def pure_trace_distance(psi: np.ndarray, phi: np.ndarray) -> float:
    """Trace norm of ``|psi><psi| - |phi><phi|`` for unit vectors."""
    f = min(1.0, abs(np.vdot(psi, phi)) ** 2)
    return 2.0 * math.sqrt(max(0.0, 1.0 - f))


def sandwich_difference(U1, U2, V1, V2, A, norm=None) -> tuple:
    """``(||U1 A U2 - V1 A V2||, ||(U1 - V1) A|| + ||A (U2 - V2)||)``.

    For unitary ``U2, V1`` and a unitarily invariant ``norm`` (default: operator
    norm) the first entry never exceeds the second.
    """
    norm = norm or op_norm
    lhs = norm(U1 @ A @ U2 - V1 @ A @ V2)
    return lhs, norm((U1 - V1) @ A) + norm(A @ (U2 - V2))


def trace_bound_from_distance(eps: float) -> float:
    """Trace-distance bound ``2 eps`` for vectors at Euclidean distance ``<= eps <= sqrt 2``."""
    if not 0 <= eps <= math.sqrt(2) + 1e-15:
        raise ValueError("vector distance bound needs 0 <= eps <= sqrt(2)")
    return 2.0 * eps


def phase_min_distance(eps: float) -> float:
    """``min_alpha ||psi - e^{i alpha} phi||`` when ``1 - |<psi|phi>| = eps``."""
    if eps < 0:
        raise ValueError("overlap defect must be non-negative")
    return math.sqrt(2.0 * eps)


def trace_bound_from_overlap(eps: float) -> float:
    """Trace-distance bound ``2 sqrt(2 eps)`` when ``1 - |<psi|phi>| = eps <= 1``."""
    if not 0 <= eps <= 1:
        raise ValueError("overlap defect must lie in [0, 1]")
    return 2.0 * math.sqrt(2.0 * eps)


def norms_and_fidelity(A=None, psi=None, phi=None, rho=None) -> dict:
    """Collect the norms and fidelities that apply to the given arguments."""
    out = {}
    if A is not None:
        out["op_norm"] = op_norm(A)
        out["trace_norm"] = trace_norm(A)
    if psi is not None and (rho is not None or phi is not None):
        f = fidelity(psi, rho if rho is not None else phi)
        out["fidelity"] = f
        out["infidelity"] = 1.0 - f
    if psi is not None and phi is not None:
        defect = max(0.0, 1.0 - abs(np.vdot(psi, phi)))
        out["trace_distance"] = pure_trace_distance(psi, phi)
        out["trace_distance_bound"] = trace_bound_from_overlap(min(defect, 1.0))
    return out


def nontrivial_support(A: np.ndarray, sites: Sequence[int], dims, tol: float = 1e-9) -> frozenset:
    """Sites on which ``A`` does not act as the identity.

    ``A`` acts trivially on ``x`` exactly when it equals its normalized partial
    trace over ``x`` tensored with the identity on ``x``.
    """
    sites = tuple(sorted(sites))
    dl = [dims[s] for s in sites]
    out = set()
    scale = max(op_norm(A), 1.0)
    for k, x in enumerate(sites):
        others = [i for i in range(len(sites)) if i != k]
        red = partial_trace(A, others, dl) / dl[k]
        back = _embed_complement(red, k, dl)
        if np.max(np.abs(A - back)) > tol * scale:
            out.add(x)
    return frozenset(out)


def _embed_complement(red: np.ndarray, k: int, dims) -> np.ndarray:
    """``red`` on all factors except ``k``, identity on factor ``k``."""
    others = [i for i in range(len(dims)) if i != k]
    return embed_matrix(red, others, dims)


# interaction picture

def dirac_propagator(H: LocalHamiltonian, F: LocalHamiltonian, G: LocalHamiltonian,
                     r: float, t: float, s: float, sites=None) -> dict:
    """Interaction-picture propagator ``U_D = U^F_rt U^H_ts U^F_sr``.

    Returns ``U_D`` and ``tilde_G``, a callable giving ``U^F_rt G(t) U^F_tr``.
    """
    sites = _sites_of(H, sites)
    for tau in [0.5 * (a + b) for a, b in time_slices(H, min(t, s) - 1, max(t, s) + 1)]:
        if np.max(np.abs(H.dense(tau, sites) - F.dense(tau, sites) - G.dense(tau, sites))) > 1e-12:
            raise ValueError("split inconsistent: H != F + G")
    UF_rt = propagator(F, r, t, sites)
    UF_sr = propagator(F, s, r, sites)
    UD = UF_rt @ propagator(H, t, s, sites) @ UF_sr

    def tilde_G(time: float) -> np.ndarray:
        V = propagator(F, r, time, sites)
        return V @ G.dense(time, sites) @ V.conj().T

    return {"U_D": UD, "tilde_G": tilde_G}


def dirac_residual(H, F, G, r: float, t: float, s: float, h: float = 1e-5, sites=None) -> float:
    """Central-difference residual ``||d/dt U_D + i tilde_G(t) U_D||``."""
    up = dirac_propagator(H, F, G, r, t + h, s, sites)["U_D"]
    dn = dirac_propagator(H, F, G, r, t - h, s, sites)["U_D"]
    here = dirac_propagator(H, F, G, r, t, s, sites)
    deriv = (up - dn) / (2 * h)
    return op_norm(deriv + 1j * here["tilde_G"](t) @ here["U_D"])
