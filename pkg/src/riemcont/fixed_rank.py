"""Fixed-rank manifold M_k of m x n matrices as an embedded submanifold.

Points are kept factored as U diag(s) V^T and tangents as (M, Up, Vp) with
embedding U M V^T + Up V^T + U Vp^T, so nothing m x n is formed unless a
caller asks for a dense embedding. Ambient directions passed to the
tangent projection only need to support ``Z @ V`` and ``Z.T @ U``; dense
arrays, scipy sparse matrices and :class:`SparsePlusLowRank` all qualify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import matfunc
from .errors import ContractError, RetractionError
from .manifold import Manifold, Tangent

ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FixedRankPoint:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    cache: dict

    @classmethod
    def from_factors(cls, U, s, V, check: bool = True) -> "FixedRankPoint":
        U = np.asarray(U, dtype=float)
        s = np.asarray(s, dtype=float)
        V = np.asarray(V, dtype=float)
        k = len(s)
        if U.shape[1] != k or V.shape[1] != k:
            raise ContractError(f"factor shapes {U.shape}, {s.shape}, {V.shape} disagree")
        if check:
            eye = np.eye(k)
            if np.linalg.norm(U.T @ U - eye) > ORTHO_TOL or np.linalg.norm(V.T @ V - eye) > ORTHO_TOL:
                raise ContractError("U or V does not have orthonormal columns")
            if np.any(np.diff(s) > 0) or s[-1] <= 0:
                raise ContractError("singular values must be positive and descending")
        return cls(U, s, V, {})

    @classmethod
    def from_matrix(cls, a, k: int) -> "FixedRankPoint":
        U, s, V = matfunc.truncated_svd(a, k)
        return cls(U, s, V, {})

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self) -> int:
        return len(self.s)

    def equals(self, other) -> bool:
        return (
            np.array_equal(self.U, other.U)
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.V, other.V)
        )

    def dense(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T


@dataclass(frozen=True, eq=False)
class FixedRankTangent(Tangent):
    base: FixedRankPoint
    M: np.ndarray
    Up: np.ndarray
    Vp: np.ndarray

    def parts(self):
        return (self.M, self.Up, self.Vp)

    def with_parts(self, parts):
        return FixedRankTangent(self.base, *parts)

    def factors(self):
        """(L, R) with embedding L @ R.T."""
        X = self.base
        return np.hstack([X.U @ self.M + self.Up, X.U]), np.hstack([X.V, self.Vp])


class OmegaMask:
    """Sorted, unique index set Omega within an m x n grid.

    Holds a precomputed CSR pattern so Omega-supported value vectors turn
    into sparse matrices without re-sorting.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        m, n = shape
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ContractError("rows and cols must be 1-d arrays of equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise ContractError("Omega index out of range")
        lin = rows * n + cols
        order = np.argsort(lin, kind="stable")
        lin = lin[order]
        if np.any(np.diff(lin) == 0):
            raise ContractError("Omega indices are not unique")
        self.rows = rows[order]
        self.cols = cols[order]
        self.shape = (m, n)
        self._indptr = np.searchsorted(self.rows, np.arange(m + 1)).astype(np.int64)
        self._cols32 = self.cols.astype(np.int32)

    def __len__(self):
        return len(self.rows)

    def linear(self) -> np.ndarray:
        return self.rows * self.shape[1] + self.cols

    def sparse(self, values) -> sp.csr_matrix:
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self),):
            raise ContractError(f"expected {len(self)} values, got {values.shape}")
        return sp.csr_matrix((values, self._cols32, self._indptr), shape=self.shape)

    def dense(self, values) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = values
        return out

    def gather(self, a) -> np.ndarray:
        return np.asarray(a)[self.rows, self.cols]


class SparsePlusLowRank:
    """Ambient matrix S + L R^T with S scipy-sparse (or None) and optional factors."""

    def __init__(self, sparse=None, left=None, right=None):
        self.sparse = sparse
        self.left = left
        self.right = right

    def __matmul__(self, other):
        out = 0.0
        if self.sparse is not None:
            out = self.sparse @ other
        if self.left is not None:
            out = out + self.left @ (self.right.T @ other)
        return out

    @property
    def T(self):
        return SparsePlusLowRank(
            None if self.sparse is None else self.sparse.T.tocsr(),
            self.right,
            self.left,
        )


def omega_values(X: FixedRankPoint, omega: OmegaMask) -> np.ndarray:
    """Entries of U diag(s) V^T on Omega in O(|Omega| k)."""
    ug, vg = _gathered_factors(X, omega)
    return _rowdot(ug * X.s, vg)


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


def _gathered_factors(X: FixedRankPoint, omega: OmegaMask):
    """(U[rows], V[cols]), memoized on the point since every Hessian apply reuses them."""
    key = ("omega-gather", id(omega))
    hit = X.cache.get(key)
    if hit is None or hit[0] is not omega:
        hit = X.cache[key] = (omega, X.U[omega.rows], X.V[omega.cols])
    return hit[1], hit[2]


def tangent_omega_values(xi: FixedRankTangent, omega: OmegaMask) -> np.ndarray:
    """Entries of U M V^T + Up V^T + U Vp^T on Omega in O(|Omega| k)."""
    ug, vg = _gathered_factors(xi.base, omega)
    return _rowdot(ug @ xi.M + xi.Up[omega.rows], vg) + _rowdot(ug, xi.Vp[omega.cols])


class FixedRankManifold(Manifold):
    def __init__(self, m: int, n: int, k: int):
        if not 1 <= k <= min(m, n):
            raise ContractError(f"rank {k} invalid for {m}x{n}")
        self.m, self.n, self.k = m, n, k
        self.dim = k * (m + n - k)

    @property
    def typical_dist(self):
        return 10.0 * self.k

    def point(self, U, s, V) -> FixedRankPoint:
        return FixedRankPoint.from_factors(U, s, V)

    def inner(self, x, xi, eta):
        self.check_base(x, xi, eta)
        return xi.frobenius(eta)

    def zero(self, x):
        k = self.k
        return FixedRankTangent(x, np.zeros((k, k)), np.zeros((self.m, k)), np.zeros((self.n, k)))

    def project_tangent(self, x, z):
        """Pi(X) Z: M = U^T Z V, Up = (I - UU^T) Z V, Vp = (I - VV^T) Z^T U."""
        U, V = x.U, x.V
        zv = np.asarray(z @ V)
        ztu = np.asarray(z.T @ U)
        M = U.T @ zv
        return FixedRankTangent(x, M, zv - U @ M, ztu - V @ M.T)

    def embed(self, x):
        return x.dense()

    def embed_tangent(self, xi):
        L, R = xi.factors()
        return L @ R.T

    def retract(self, x, xi):
        """Metric projection: rank-k truncated SVD of X + xi via a 2k x 2k core."""
        self.check_base(x, xi)
        U, s, V, k = x.U, x.s, x.V, self.k
        up = xi.Up - U @ (U.T @ xi.Up)
        vp = xi.Vp - V @ (V.T @ xi.Vp)
        qu, ru = np.linalg.qr(up)
        qv, rv = np.linalg.qr(vp)
        core = np.block([[np.diag(s) + xi.M, rv.T], [ru, np.zeros((k, k))]])
        cu, cs, cvt = np.linalg.svd(core)
        if not cs[k - 1] > matfunc.RANK_RTOL * cs[0]:
            raise RetractionError(f"rank drop in retraction: sigma_k = {cs[k - 1]:.3e}")
        U_new = np.hstack([U, qu]) @ cu[:, :k]
        V_new = np.hstack([V, qv]) @ cvt[:k].T
        U_new, V_new = matfunc.normalize_signs(U_new, V_new)
        return FixedRankPoint(U_new, cs[:k].copy(), V_new, {})

    def transport(self, x, y, xi):
        """Orthogonal projection of the embedded xi onto T_y M_k."""
        self.check_base(x, xi)
        if x is y:
            return FixedRankTangent(y, xi.M, xi.Up, xi.Vp)
        L, R = xi.factors()
        return self.project_tangent(y, SparsePlusLowRank(left=L, right=R))

    vector_transport = transport

    def random_point(self, rng, spectrum=None) -> FixedRankPoint:
        U, _ = np.linalg.qr(rng.standard_normal((self.m, self.k)))
        V, _ = np.linalg.qr(rng.standard_normal((self.n, self.k)))
        s = np.sort(rng.uniform(1.0, 2.0, self.k))[::-1] if spectrum is None else np.asarray(spectrum, float)
        return FixedRankPoint.from_factors(U, s, V)

    def random_tangent(self, x, rng):
        k = self.k
        z = SparsePlusLowRank(
            left=rng.standard_normal((self.m, 2 * k)), right=rng.standard_normal((self.n, 2 * k))
        )
        t = self.project_tangent(x, z)
        return FixedRankTangent(x, rng.standard_normal((k, k)), t.Up, t.Vp)
