"""Dense tensor-product helpers shared by the oracle and the constructions.

Multi-site vectors and matrices use big-endian site order: the first listed
site is the most significant tensor factor.
"""
from __future__ import annotations

import functools
from typing import Sequence

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return functools.reduce(np.kron, mats, np.eye(1, dtype=complex))


def apply_local(op: np.ndarray, positions: Sequence[int], dims: Sequence[int],
                X: np.ndarray) -> np.ndarray:
    """Apply ``op`` (acting on the factors at ``positions``) to the rows of ``X``.

    ``X`` has shape ``(prod(dims), ...)``; trailing axes are carried along. The
    order of ``positions`` is the factor order of ``op``.
    """
    dims = tuple(dims)
    positions = list(positions)
    k = len(positions)
    rest = X.shape[1:]
    T = X.reshape(dims + rest)
    sub = tuple(dims[p] for p in positions)
    opT = np.asarray(op).reshape(sub + sub)
    out = np.tensordot(opT, T, axes=(list(range(k, 2 * k)), positions))
    out = np.moveaxis(out, list(range(k)), positions)
    return out.reshape(X.shape)


def embed_matrix(op: np.ndarray, positions: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """``op`` on the factors at ``positions`` tensored with identity elsewhere."""
    D = int(np.prod(dims))
    return apply_local(op, positions, dims, np.eye(D, dtype=complex))


def partial_trace(rho: np.ndarray, keep: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Reduced matrix on the factors ``keep`` (kept in the given order)."""
    dims = tuple(dims)
    n = len(dims)
    keep = list(keep)
    T = np.asarray(rho).reshape(dims + dims)
    drop = [i for i in range(n) if i not in keep]
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    T = T.transpose(perm)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    T = T.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", T)


def eigh_herm(H: np.ndarray):
    """Eigendecomposition of the Hermitian part of ``H``."""
    return np.linalg.eigh((H + H.conj().T) / 2)


def expm_herm(H: np.ndarray, t: float, eig=None) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H`` via its eigendecomposition."""
    w, V = eig if eig is not None else eigh_herm(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def op_norm(A: np.ndarray) -> float:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("operator norm needs a square matrix")
    if A.size == 0:
        return 0.0
    if np.allclose(A, A.conj().T, atol=1e-13, rtol=0):
        return float(np.max(np.abs(np.linalg.eigvalsh((A + A.conj().T) / 2))))
    return float(np.linalg.norm(A, 2))


def trace_norm(A: np.ndarray) -> float:
    A = np.asarray(A)
    if np.allclose(A, A.conj().T, atol=1e-13, rtol=0):
        return float(np.sum(np.abs(np.linalg.eigvalsh((A + A.conj().T) / 2))))
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def is_hermitian(A: np.ndarray, tol: float = 1e-12) -> bool:
    A = np.asarray(A)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and np.allclose(A, A.conj().T, atol=tol, rtol=0)


def polar_unitary(A: np.ndarray) -> np.ndarray:
    """Closest unitary to ``A`` in any unitarily invariant norm."""
    U, _, Vh = np.linalg.svd(A)
    return U @ Vh


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix."""
    Zm = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Zm)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (A + A.conj().T) / 2
