"""SPD(n) with the affine-invariant metric <V, W>_A = trace(A^{-1} V A^{-1} W)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import matfunc
from .errors import ContractError, DomainError, RetractionError
from .manifold import Manifold, Tangent

SPD_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class SpdPoint:
    """An SPD matrix with its eigendecomposition computed once at construction.

    ``cache`` is owned by the point and lets problems memoize per-point work
    (e.g. the K congruence eigendecompositions of the Karcher objective).
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cache: dict

    @classmethod
    def from_matrix(cls, a) -> "SpdPoint":
        a = matfunc.check_symmetric(a)
        w, q = np.linalg.eigh(a)
        if not w[-1] > 0 or w[0] <= SPD_FLOOR * w[-1]:
            raise DomainError(
                f"not SPD within floor {SPD_FLOOR:g}: eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}]"
            )
        return cls(a, w, q, {})

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def equals(self, other) -> bool:
        return np.array_equal(self.matrix, other.matrix)

    def _fn(self, values) -> np.ndarray:
        q = self.eigenvectors
        out = (q * values) @ q.T
        return 0.5 * (out + out.T)

    @cached_property
    def inv(self) -> np.ndarray:
        return self._fn(1.0 / self.eigenvalues)

    @cached_property
    def sqrt(self) -> np.ndarray:
        return self._fn(np.sqrt(self.eigenvalues))

    @cached_property
    def invsqrt(self) -> np.ndarray:
        return self._fn(1.0 / np.sqrt(self.eigenvalues))


@dataclass(frozen=True, eq=False)
class SpdTangent(Tangent):
    base: SpdPoint
    matrix: np.ndarray

    def parts(self):
        return (self.matrix,)

    def with_parts(self, parts):
        return SpdTangent(self.base, parts[0])


def _sym(a):
    return 0.5 * (a + a.T)


class SpdManifold(Manifold):
    def __init__(self, n: int):
        self.n = n
        self.dim = n * (n + 1) // 2

    def point(self, a) -> SpdPoint:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.n, self.n):
            raise ContractError(f"expected {self.n}x{self.n}, got {a.shape}")
        return SpdPoint.from_matrix(a)

    def tangent(self, x: SpdPoint, v) -> SpdTangent:
        return SpdTangent(x, matfunc.check_symmetric(v))

    def inner(self, x, xi, eta):
        self.check_base(x, xi, eta)
        p = x.inv @ xi.matrix
        q = x.inv @ eta.matrix
        return float(np.sum(p * q.T))

    def zero(self, x):
        return SpdTangent(x, np.zeros((self.n, self.n)))

    def geodesic(self, a: SpdPoint, b: SpdPoint, t: float) -> SpdPoint:
        """A exp(t log(A^{-1} B)), evaluated in the symmetric congruence frame."""
        s = _sym(a.invsqrt @ b.matrix @ a.invsqrt)
        e = matfunc.sym_eig(s)
        mid = (e.eigenvectors * e.eigenvalues**t) @ e.eigenvectors.T
        return SpdPoint.from_matrix(_sym(a.sqrt @ mid @ a.sqrt))

    def exp(self, a: SpdPoint, xi: SpdTangent) -> SpdPoint:
        self.check_base(a, xi)
        s = matfunc.sym_expm(_sym(a.invsqrt @ xi.matrix @ a.invsqrt))
        return SpdPoint.from_matrix(_sym(a.sqrt @ s @ a.sqrt))

    def log(self, a: SpdPoint, b: SpdPoint) -> SpdTangent:
        s = matfunc.spd_logm(_sym(a.invsqrt @ b.matrix @ a.invsqrt))
        return SpdTangent(a, _sym(a.sqrt @ s @ a.sqrt))

    def distance(self, a, b):
        w = np.linalg.eigvalsh(_sym(a.invsqrt @ b.matrix @ a.invsqrt))
        if w[0] <= 0:
            raise DomainError(f"congruence has non-positive eigenvalue {w[0]:.3e}")
        return float(np.sqrt(np.sum(np.log(w) ** 2)))

    def retract(self, x, xi):
        """Second-order retraction A + xi + 1/2 xi A^{-1} xi."""
        self.check_base(x, xi)
        v = xi.matrix
        r = _sym(x.matrix + v + 0.5 * v @ x.inv @ v)
        try:
            return SpdPoint.from_matrix(r)
        except DomainError as exc:
            raise RetractionError(str(exc)) from exc

    def transport_map(self, a: SpdPoint, b: SpdPoint) -> np.ndarray:
        """E = (B A^{-1})^{1/2} = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{-1/2}."""
        s = matfunc.sym_sqrtm(_sym(a.invsqrt @ b.matrix @ a.invsqrt))
        return a.sqrt @ s @ a.invsqrt

    def transport(self, x, y, xi):
        """Parallel transport along the geodesic from x to y."""
        self.check_base(x, xi)
        if x is y:
            return SpdTangent(y, xi.matrix)
        e = self.transport_map(x, y)
        return SpdTangent(y, _sym(e @ xi.matrix @ e.T))

    def vector_transport(self, x, y, xi):
        """Identity on Sym(n), which is every tangent space."""
        self.check_base(x, xi)
        return SpdTangent(y, xi.matrix)

    def levi_civita_correct(self, a: SpdPoint, xi: SpdTangent, eta: SpdTangent, deta) -> SpdTangent:
        """Covariant derivative nabla_xi eta from the plain directional derivative ``deta``."""
        self.check_base(a, xi, eta)
        corr = xi.matrix @ a.inv @ eta.matrix
        return SpdTangent(a, _sym(np.asarray(deta) - 0.5 * (corr + corr.T)))

    def project_tangent(self, x, z):
        return SpdTangent(x, _sym(np.asarray(z, dtype=float)))

    def embed(self, x):
        return x.matrix

    def embed_tangent(self, xi):
        return xi.matrix

    def random_tangent(self, x, rng):
        g = rng.standard_normal((self.n, self.n))
        return SpdTangent(x, _sym(g))

    def random_point(self, rng, cond: float = 10.0) -> SpdPoint:
        q, r = np.linalg.qr(rng.standard_normal((self.n, self.n)))
        q = q * np.sign(np.diag(r))
        w = np.exp(rng.uniform(0.0, np.log(cond), self.n))
        return SpdPoint.from_matrix(_sym((q * w) @ q.T))

    @property
    def typical_dist(self):
        return float(np.sqrt(self.dim))

    def tangent_basis(self, x: SpdPoint) -> list[SpdTangent]:
        """Basis of T_x SPD(n) orthonormal in the affine-invariant metric."""
        basis = []
        for i in range(self.n):
            for j in range(i, self.n):
                e = np.zeros((self.n, self.n))
                if i == j:
                    e[i, i] = 1.0
                else:
                    e[i, j] = e[j, i] = np.sqrt(0.5)
                basis.append(SpdTangent(x, _sym(x.sqrt @ e @ x.sqrt)))
        return basis
