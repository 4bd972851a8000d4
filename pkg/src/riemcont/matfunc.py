"""Dense matrix functions built on symmetric eigendecompositions.

Everything here is a pure function of its array arguments. The SPD-specific
routines (exp, log, square roots) go through ``numpy.linalg.eigh``; the
Frechet derivative of the logarithm uses the Daleckii-Krein formula with
divided differences of ``log`` over eigenvalue pairs.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ContractError, DomainError, RankDeficiencyError

SYM_RTOL = 1e-12
DEGENERATE_RTOL = 1e-12
RANK_RTOL = 1e-14


class SymEig(NamedTuple):
    """Eigenvalues sorted descending and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def as_matrix(a, square: bool = False) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ContractError(f"expected a 2-d array, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix has non-finite entries")
    return a


def check_symmetric(a, rtol: float = SYM_RTOL) -> np.ndarray:
    """Return the symmetric part of ``a`` after checking its skew part is negligible."""
    a = as_matrix(a, square=True)
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > rtol * max(scale, np.finfo(float).tiny):
        raise ContractError("matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


def sym_eig(s) -> SymEig:
    s = check_symmetric(s)
    w, q = np.linalg.eigh(s)
    return SymEig(w[::-1].copy(), q[:, ::-1].copy())


def _spd_eig(a) -> SymEig:
    e = sym_eig(a)
    if e.eigenvalues[-1] <= 0.0:
        raise DomainError(
            f"matrix is not positive definite: smallest eigenvalue {e.eigenvalues[-1]:.3e}"
        )
    return e


def _apply(e: SymEig, values: np.ndarray) -> np.ndarray:
    q = e.eigenvectors
    out = (q * values) @ q.T
    return 0.5 * (out + out.T)


def sym_expm(s) -> np.ndarray:
    e = sym_eig(s)
    return _apply(e, np.exp(e.eigenvalues))


def spd_logm(a) -> np.ndarray:
    e = _spd_eig(a)
    return _apply(e, np.log(e.eigenvalues))


def sym_sqrtm(a) -> np.ndarray:
    e = _spd_eig(a)
    return _apply(e, np.sqrt(e.eigenvalues))


def sym_invsqrtm(a) -> np.ndarray:
    e = _spd_eig(a)
    return _apply(e, 1.0 / np.sqrt(e.eigenvalues))


def spd_pair_log(a, b) -> np.ndarray:
    """log(A^{-1} B) for SPD A, B via the congruence A^{-1/2} B A^{-1/2}.

    The result is generally not symmetric; it satisfies ``A @ expm(result) == B``.
    """
    a = as_matrix(a, square=True)
    b = as_matrix(b, square=True)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    ea = _spd_eig(a)
    _spd_eig(b)
    rs = _apply(ea, np.sqrt(ea.eigenvalues))
    ris = _apply(ea, 1.0 / np.sqrt(ea.eigenvalues))
    inner = ris @ b @ ris
    return ris @ spd_logm(0.5 * (inner + inner.T)) @ rs


def log_divided_differences(w: np.ndarray) -> np.ndarray:
    """First divided differences of log over eigenvalue pairs.

    ``w`` has shape (..., n) with positive entries; the result has shape
    (..., n, n) with entry (i, j) equal to (log w_i - log w_j) / (w_i - w_j)
    and the limit 1 / w_i on (near-)coincident pairs.
    """
    w = np.asarray(w, dtype=float)
    wi = w[..., :, None]
    wj = w[..., None, :]
    diff = wi - wj
    close = np.abs(diff) < DEGENERATE_RTOL * np.maximum(wi, wj)
    safe = np.where(close, 1.0, diff)
    # log1p keeps (log wi - log wj) accurate when the ratio is near one
    ratio = np.where(close, 0.0, diff / wj)
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = np.log1p(ratio) / safe
    limit = np.broadcast_to(1.0 / wi, dd.shape)
    return np.where(close, limit, dd)


def sym_frechet_dlog(e: SymEig, E: np.ndarray) -> np.ndarray:
    """D log(S)[E] for SPD S given by its eigendecomposition; E need not be symmetric."""
    q = e.eigenvectors
    ehat = q.T @ E @ q
    return q @ (log_divided_differences(e.eigenvalues) * ehat) @ q.T


def frechet_dlog(m, E) -> np.ndarray:
    """Frechet derivative of the principal logarithm at ``m`` in direction ``E``.

    ``m`` must be diagonalizable with strictly positive real spectrum, which
    holds for products X^{-1} B of SPD matrices. The eigenbasis is used
    directly, so badly non-normal ``m`` will lose accuracy.
    """
    m = as_matrix(m, square=True)
    E = as_matrix(E, square=True)
    if m.shape != E.shape:
        raise ContractError(f"dimension mismatch: {m.shape} vs {E.shape}")
    w, v = np.linalg.eig(m)
    scale = np.max(np.abs(w))
    if np.any(np.abs(w.imag) > 1e-10 * scale) or np.any(w.real <= 0.0):
        bad = w[np.argmin(w.real)]
        raise DomainError(f"spectrum not strictly positive real (eigenvalue {bad})")
    w = w.real
    v = np.real_if_close(v, tol=1e6).real
    vinv = np.linalg.inv(v)
    ehat = vinv @ E @ v
    return v @ (log_divided_differences(w) * ehat) @ vinv


def normalize_signs(u: np.ndarray, v: np.ndarray):
    """Make the first non-negligible entry of each column of ``u`` positive."""
    idx = np.argmax(np.abs(u) > 1e-12 * np.max(np.abs(u), axis=0), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def truncated_svd(m, k: int):
    """Rank-k truncated SVD ``(U, s, V)`` with descending ``s`` and sign-normalized ``U``."""
    m = as_matrix(m)
    if not 1 <= k <= min(m.shape):
        raise ContractError(f"rank {k} out of range for shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s[0] == 0.0 or s[k - 1] < RANK_RTOL * s[0]:
        raise RankDeficiencyError(
            f"sigma_{k} = {s[k - 1]:.3e} is numerically zero (sigma_1 = {s[0]:.3e})"
        )
    u, v = normalize_signs(u[:, :k], vt[:k].T)
    return u, s[:k].copy(), v
