"""Dense matrix primitives: vectorization, dilation, matrix Catoni transform,
hard-thresholded SVD, norms and subspace diagnostics.

Matrices are plain ``numpy`` arrays. ``vec`` stacks columns (Fortran order),
so entry ``(i, j)`` of a ``d1 x d2`` matrix lands at position ``j * d1 + i``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ContractError, DimensionError


class SvdResult(NamedTuple):
    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray


class MatrixNorms(NamedTuple):
    op: float
    nuclear: float
    frobenius: float


def vec(M: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {M.shape}")
    return M.reshape(-1, order="F")


def reshape(v: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size != d1 * d2:
        raise DimensionError(f"vector of length {v.size} cannot be reshaped to {d1}x{d2}")
    return v.reshape((d1, d2), order="F")


def vec_batch(arms: np.ndarray) -> np.ndarray:
    """Vectorize a stack of matrices of shape (n, d1, d2) into rows (n, d1*d2)."""
    arms = np.asarray(arms, dtype=float)
    n = arms.shape[0]
    return arms.transpose(0, 2, 1).reshape(n, -1)


def reshape_batch(vs: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Inverse of :func:`vec_batch`."""
    vs = np.asarray(vs, dtype=float)
    return vs.reshape(vs.shape[0], d2, d1).transpose(0, 2, 1)


def dilation(A: np.ndarray) -> np.ndarray:
    """Hermitian dilation ``[[0, A], [A^T, 0]]``.

    Accepts a single matrix or a stack with shape (..., d1, d2).
    """
    A = np.asarray(A, dtype=float)
    d1, d2 = A.shape[-2:]
    out = np.zeros(A.shape[:-2] + (d1 + d2, d1 + d2))
    out[..., :d1, d1:] = A
    out[..., d1:, :d1] = np.swapaxes(A, -1, -2)
    return out


def ht_extract(M: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """Top-right ``d1 x d2`` block of a ``(d1+d2)``-dimensional square matrix."""
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] != (d1 + d2, d1 + d2):
        raise DimensionError(f"matrix of shape {M.shape[-2:]} is not {d1 + d2}x{d1 + d2}")
    return M[..., :d1, d1:].copy()


def psi0(x):
    """Scalar Catoni influence function, applied elementwise.

    ``log(1 + x + x^2/2)`` for ``x > 0`` and ``-log(1 - x + x^2/2)`` otherwise.
    """
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    out = np.sign(x) * np.log1p(a + 0.5 * a * a)
    return out if out.ndim else float(out)


def matrix_psi(S: np.ndarray, nu: float) -> np.ndarray:
    """Apply :func:`psi0` to every eigenvalue of ``nu * S``.

    ``S`` may be a stack of symmetric matrices; it is symmetrized first.
    """
    if nu <= 0:
        raise ContractError("scale nu must be positive")
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    lam, U = np.linalg.eigh(S)
    return (U * psi0(nu * lam)[..., None, :]) @ np.swapaxes(U, -1, -2)


def svd(M: np.ndarray) -> SvdResult:
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=float), full_matrices=False)
    return SvdResult(U, s, Vt)


def hard_threshold_svd(M: np.ndarray, tau: float) -> tuple[np.ndarray, int]:
    """Zero out singular values at most ``tau``.

    Returns the thresholded matrix and the number of retained singular
    values. The cutoff never drops below ``1e-10 * sigma_1`` (so ``tau == 0``
    reports the numerical rank and roundoff-level values are never kept).
    """
    if tau < 0:
        raise ContractError("threshold must be nonnegative")
    U, s, Vt = svd(M)
    if s.size == 0:
        return np.zeros_like(M, dtype=float), 0
    cutoff = max(tau, 1e-10 * s[0])
    keep = s > cutoff
    out = (U[:, keep] * s[keep]) @ Vt[keep]
    return out, int(keep.sum())


def numerical_rank(M: np.ndarray, rtol: float = 1e-10) -> int:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def norms(M: np.ndarray) -> MatrixNorms:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    op = float(s[0]) if s.size else 0.0
    return MatrixNorms(op=op, nuclear=float(s.sum()), frobenius=float(np.sqrt(np.sum(s**2))))


def op_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


def nuclear_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, "nuc"))


def _check_orthonormal(U: np.ndarray, name: str, tol: float = 1e-6) -> None:
    gram = U.T @ U
    dev = np.max(np.abs(gram - np.eye(gram.shape[0]))) if gram.size else 0.0
    if dev > tol:
        raise ContractError(f"{name} does not have orthonormal columns (Gram deviation {dev:.2e})")


def subspace_distance(U1: np.ndarray, U2: np.ndarray) -> float:
    """``||(I - U1 U1^T) U2||_op`` for orthonormal bases ``U1`` and ``U2``."""
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.shape[0] != U2.shape[0]:
        raise DimensionError("bases live in different ambient dimensions")
    _check_orthonormal(U1, "U1")
    _check_orthonormal(U2, "U2")
    resid = U2 - U1 @ (U1.T @ U2)
    if resid.size == 0:
        return 0.0
    return float(min(1.0, np.linalg.norm(resid, 2)))


def orthogonal_complement(U: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of ``span(U)``."""
    U = np.asarray(U, dtype=float)
    n, k = U.shape
    if k == 0:
        return np.eye(n)
    full = np.linalg.svd(U, full_matrices=True)[0]
    return full[:, k:]
