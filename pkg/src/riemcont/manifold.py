"""Geometry and parametric-problem contracts consumed by the solvers and the
continuation engine, plus reusable finite-difference validators.

Tangent vectors carry their base point. Arithmetic between tangents at
different points raises :class:`ContractError` instead of silently mixing
tangent spaces.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DistanceUnavailable


def same_point(p, q) -> bool:
    return p is q or p.equals(q)


class Tangent:
    """Mixin giving vector-space arithmetic over the array blocks of a tangent."""

    base: object

    def parts(self) -> tuple:
        raise NotImplementedError

    def with_parts(self, parts) -> "Tangent":
        raise NotImplementedError

    def _check(self, other):
        if not isinstance(other, type(self)):
            raise ContractError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if not same_point(self.base, other.base):
            raise ContractError("tangent vectors live at different base points")

    def __add__(self, other):
        self._check(other)
        return self.with_parts(tuple(a + b for a, b in zip(self.parts(), other.parts())))

    def __sub__(self, other):
        self._check(other)
        return self.with_parts(tuple(a - b for a, b in zip(self.parts(), other.parts())))

    def __neg__(self):
        return self.with_parts(tuple(-a for a in self.parts()))

    def __mul__(self, c):
        return self.with_parts(tuple(c * a for a in self.parts()))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self.with_parts(tuple(a / c for a in self.parts()))

    def frobenius(self, other) -> float:
        """Sum of blockwise Frobenius products (the metric for embedded geometries)."""
        self._check(other)
        return float(sum(np.vdot(a, b) for a, b in zip(self.parts(), other.parts())))


class Manifold(abc.ABC):
    """Riemannian geometry contract."""

    dim: int

    @property
    def typical_dist(self) -> float:
        return float(np.sqrt(self.dim))

    @abc.abstractmethod
    def inner(self, x, xi, eta) -> float: ...

    def norm(self, x, xi) -> float:
        return float(np.sqrt(max(self.inner(x, xi, xi), 0.0)))

    @abc.abstractmethod
    def zero(self, x): ...

    @abc.abstractmethod
    def retract(self, x, xi): ...

    @abc.abstractmethod
    def transport(self, x, y, xi): ...

    @abc.abstractmethod
    def project_tangent(self, x, z): ...

    @abc.abstractmethod
    def embed(self, x) -> np.ndarray: ...

    @abc.abstractmethod
    def embed_tangent(self, xi) -> np.ndarray: ...

    @abc.abstractmethod
    def random_tangent(self, x, rng: np.random.Generator): ...

    def vector_transport(self, x, y, xi):
        """Projection of the embedded xi onto T_y M."""
        return self.project_tangent(y, self.embed_tangent(xi))

    def distance(self, x, y) -> float:
        raise DistanceUnavailable(f"{type(self).__name__} has no closed-form distance")

    def check_base(self, x, *tangents):
        for t in tangents:
            if not same_point(t.base, x):
                raise ContractError("tangent vector is not based at the given point")


class ParametricProblem(abc.ABC):
    """f(x, lambda) on a manifold with the derivatives the continuation needs."""

    manifold: Manifold

    @abc.abstractmethod
    def value(self, x, lam: float) -> float: ...

    @abc.abstractmethod
    def gradient(self, x, lam: float): ...

    @abc.abstractmethod
    def hessian_apply(self, x, lam: float, xi): ...

    @abc.abstractmethod
    def dgrad_dlambda(self, x, lam: float): ...

    def grad_norm(self, x, lam: float) -> float:
        return self.manifold.norm(x, self.gradient(x, lam))


# -- Euclidean space, used for model problems --------------------------------


@dataclass(frozen=True, eq=False)
class EuclideanPoint:
    value: np.ndarray

    def equals(self, other) -> bool:
        return np.array_equal(self.value, other.value)


@dataclass(frozen=True, eq=False)
class EuclideanTangent(Tangent):
    base: EuclideanPoint
    vector: np.ndarray

    def parts(self):
        return (self.vector,)

    def with_parts(self, parts):
        return EuclideanTangent(self.base, parts[0])


class Euclidean(Manifold):
    def __init__(self, n: int):
        self.n = n
        self.dim = n

    def point(self, v) -> EuclideanPoint:
        return EuclideanPoint(np.asarray(v, dtype=float).copy())

    def tangent(self, x, v) -> EuclideanTangent:
        return EuclideanTangent(x, np.asarray(v, dtype=float))

    def inner(self, x, xi, eta):
        self.check_base(x, xi, eta)
        return float(xi.vector @ eta.vector)

    def zero(self, x):
        return EuclideanTangent(x, np.zeros(self.n))

    def retract(self, x, xi):
        self.check_base(x, xi)
        return EuclideanPoint(x.value + xi.vector)

    def transport(self, x, y, xi):
        self.check_base(x, xi)
        return EuclideanTangent(y, xi.vector)

    def project_tangent(self, x, z):
        return EuclideanTangent(x, np.asarray(z, dtype=float).reshape(self.n))

    def embed(self, x):
        return x.value

    def embed_tangent(self, xi):
        return xi.vector

    def random_tangent(self, x, rng):
        return EuclideanTangent(x, rng.standard_normal(self.n))

    def distance(self, x, y):
        return float(np.linalg.norm(x.value - y.value))

    def tangent_basis(self, x):
        return [EuclideanTangent(x, e) for e in np.eye(self.n)]


class QuadraticProblem(ParametricProblem):
    """f(x, lam) = 1/2 x'Ax - (b + lam c)'x on R^n; the critical curve is A^{-1}(b + lam c)."""

    def __init__(self, a, b, c=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.zeros_like(self.b) if c is None else np.asarray(c, dtype=float)
        self.manifold = Euclidean(len(self.b))

    def _rhs(self, lam):
        return self.b + lam * self.c

    def value(self, x, lam):
        v = x.value
        return float(0.5 * v @ self.a @ v - self._rhs(lam) @ v)

    def gradient(self, x, lam):
        return EuclideanTangent(x, self.a @ x.value - self._rhs(lam))

    def hessian_apply(self, x, lam, xi):
        return EuclideanTangent(x, self.a @ xi.vector)

    def dgrad_dlambda(self, x, lam):
        return EuclideanTangent(x, -self.c)

    def solution(self, lam) -> EuclideanPoint:
        return EuclideanPoint(np.linalg.solve(self.a, self._rhs(lam)))


# -- finite-difference validators --------------------------------------------


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


@dataclass
class FDCheck:
    approx: np.ndarray | float
    exact: np.ndarray | float
    rel_err: float = field(init=False)

    def __post_init__(self):
        self.rel_err = relative_error(self.approx, self.exact)


def check_gradient(problem: ParametricProblem, x, lam, xi, h=1e-6) -> FDCheck:
    """Central difference of f along the retraction curve vs <grad f, xi>."""
    M = problem.manifold
    fp = problem.value(M.retract(x, h * xi), lam)
    fm = problem.value(M.retract(x, -h * xi), lam)
    return FDCheck((fp - fm) / (2 * h), M.inner(x, problem.gradient(x, lam), xi))


def check_hessian(problem: ParametricProblem, x, lam, xi, h=1e-5) -> FDCheck:
    """Central difference of the gradient field transported back to x vs Hess f[xi]."""
    M = problem.manifold
    yp = M.retract(x, h * xi)
    ym = M.retract(x, -h * xi)
    gp = M.transport(yp, x, problem.gradient(yp, lam))
    gm = M.transport(ym, x, problem.gradient(ym, lam))
    fd = (gp - gm) / (2 * h)
    return FDCheck(M.embed_tangent(fd), M.embed_tangent(problem.hessian_apply(x, lam, xi)))


def check_hessian_symmetry(problem: ParametricProblem, x, lam, xi, eta) -> float:
    M = problem.manifold
    a = M.inner(x, problem.hessian_apply(x, lam, xi), eta)
    b = M.inner(x, xi, problem.hessian_apply(x, lam, eta))
    return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)


def check_dgrad_dlambda(problem: ParametricProblem, x, lam, h=1e-5) -> FDCheck:
    M = problem.manifold
    fd = (problem.gradient(x, lam + h) - problem.gradient(x, lam - h)) / (2 * h)
    return FDCheck(M.embed_tangent(fd), M.embed_tangent(problem.dgrad_dlambda(x, lam)))


def check_in_tangent_space(manifold: Manifold, x, xi, tol=1e-12) -> bool:
    """Projection fixed-point test for a tangent vector."""
    p = manifold.project_tangent(x, manifold.embed_tangent(xi))
    e = manifold.embed_tangent(xi)
    return np.linalg.norm(manifold.embed_tangent(p) - e) <= tol * max(np.linalg.norm(e), 1.0)


def loglog_fit(hs, values):
    """Least-squares slope of log(values) against log(hs) and its R^2."""
    lx = np.log(np.asarray(hs, dtype=float))
    ly = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)
