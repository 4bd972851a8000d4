"""Parametric low-rank matrix completion on the fixed-rank manifold.

    f(X, lam) = 1/2 || P_Omega(X) - B_Omega(lam) ||_F^2,
    B_Omega(lam) = (1 - lam) P_Omega(A_0) + lam A_Omega,

with A_0 the rank-k truncated SVD of a neighbour-averaged imputation of the
observed entries, so that X = A_0 is an exact critical point at lam = 0.
Residuals are stored as vectors aligned with the sorted Omega index set and
only ever densified into scipy CSR matrices sharing one sparsity pattern.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .fixed_rank import (
    FixedRankManifold,
    FixedRankPoint,
    FixedRankTangent,
    OmegaMask,
    omega_values,
    tangent_omega_values,
)
from .manifold import ParametricProblem

FORMAT = "riemcont-completion"
VERSION = 1


def sample_function_matrix(m: int, n: int, sigma: float, box=(-1.0, 1.0, -1.0, 1.0)) -> np.ndarray:
    """A_ij = exp(-(x_i - y_j)^2 / sigma) on a regular grid of the box [a, b] x [c, d]."""
    if sigma <= 0:
        raise ContractError("sigma must be positive")
    a, b, c, d = box
    x = a + np.arange(m) * (b - a) / (m - 1)
    y = c + np.arange(n) * (d - c) / (n - 1)
    return np.exp(-((x[:, None] - y[None, :]) ** 2) / sigma)


def omega_size(m: int, n: int, k: int, oversampling: float) -> int:
    return int(round(oversampling * k * (m + n - k)))


def sample_omega(m: int, n: int, k: int, oversampling: float, seed: int) -> OmegaMask:
    """Uniform sample without replacement of round(OS k (m + n - k)) entries."""
    count = omega_size(m, n, k, oversampling)
    if count > m * n or count < 1:
        raise ContractError(f"oversampling {oversampling} asks for {count} of {m * n} entries")
    rng = np.random.default_rng(seed)
    lin = np.sort(rng.choice(m * n, size=count, replace=False))
    return OmegaMask(lin // n, lin % n, (m, n))


def impute_neighbor_average(omega: OmegaMask, values, m: int, n: int) -> np.ndarray:
    """Fill unknown cells by repeated Jacobi sweeps of 4-neighbour averaging.

    Each sweep assigns every still-empty cell that touches at least one filled
    cell the mean of its filled neighbours, using values from the previous
    sweep. Known entries are never modified. Cells that no sweep can reach
    get the mean of the known values.
    """
    if len(omega) == 0:
        raise ContractError("cannot impute from an empty observation set")
    if omega.shape != (m, n):
        raise ContractError("mask shape does not match (m, n)")
    out = omega.dense(values)
    filled = np.zeros((m, n), dtype=bool)
    filled[omega.rows, omega.cols] = True
    while not filled.all():
        vals = np.pad(np.where(filled, out, 0.0), 1)
        cnt = np.pad(filled.astype(float), 1)
        total = vals[:-2, 1:-1] + vals[2:, 1:-1] + vals[1:-1, :-2] + vals[1:-1, 2:]
        count = cnt[:-2, 1:-1] + cnt[2:, 1:-1] + cnt[1:-1, :-2] + cnt[1:-1, 2:]
        new = ~filled & (count > 0)
        if not new.any():
            out[~filled] = np.mean(values)
            break
        out[new] = total[new] / count[new]
        filled |= new
    return out


@dataclass(frozen=True, eq=False)
class CompletionInstance:
    m: int
    n: int
    k: int
    oversampling: float
    sigma: float
    seed: int
    omega: OmegaMask
    observed: np.ndarray  # A_Omega on the Omega order
    start: FixedRankPoint  # A_0
    start_values: np.ndarray  # P_Omega(A_0)
    data: np.ndarray | None = None  # full matrix when known

    def curve_values(self, lam: float) -> np.ndarray:
        return (1.0 - lam) * self.start_values + lam * self.observed

    def save(self, path) -> None:
        path = Path(path)
        header = {
            "format": FORMAT,
            "version": VERSION,
            "m": self.m,
            "n": self.n,
            "k": self.k,
            "oversampling": self.oversampling,
            "sigma": self.sigma,
            "seed": self.seed,
        }
        if path.suffix == ".npz":
            np.savez(path, header=json.dumps(header), rows=self.omega.rows, cols=self.omega.cols, values=self.observed)
            return
        doc = dict(header, rows=self.omega.rows.tolist(), cols=self.omega.cols.tolist(), values=self.observed.tolist())
        path.write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "CompletionInstance":
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as data:
                header = json.loads(str(data["header"]))
                rows, cols, values = data["rows"], data["cols"], data["values"]
        else:
            header = json.loads(path.read_text())
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise ContractError(f"unsupported instance header {header.get('format')!r} v{header.get('version')}")
        if path.suffix != ".npz":
            rows, cols, values = (np.asarray(header[key]) for key in ("rows", "cols", "values"))
        omega = OmegaMask(rows, cols, (header["m"], header["n"]))
        return instance_from_observations(
            omega, np.asarray(values, dtype=float), header["k"],
            oversampling=header["oversampling"], sigma=header["sigma"], seed=header["seed"],
        )


def instance_from_observations(omega, observed, k, oversampling=float("nan"), sigma=float("nan"), seed=-1, data=None):
    m, n = omega.shape
    filled = impute_neighbor_average(omega, observed, m, n)
    start = FixedRankPoint.from_matrix(filled, k)
    return CompletionInstance(
        m, n, k, oversampling, sigma, seed, omega, np.asarray(observed, dtype=float),
        start, omega_values(start, omega), data,
    )


def build_instance(m=300, n=300, k=15, oversampling=3.0, sigma=0.1, seed=0) -> CompletionInstance:
    data = sample_function_matrix(m, n, sigma)
    omega = sample_omega(m, n, k, oversampling, seed)
    return instance_from_observations(omega, omega.gather(data), k, oversampling, sigma, seed, data)


def completion_objective(X: FixedRankPoint, omega: OmegaMask, observed) -> float:
    """The unparametrized objective 1/2 ||P_Omega(X) - A_Omega||^2."""
    r = omega_values(X, omega) - observed
    return 0.5 * float(r @ r)


class CompletionProblem(ParametricProblem):
    def __init__(self, instance: CompletionInstance):
        self.instance = instance
        self.manifold = FixedRankManifold(instance.m, instance.n, instance.k)
        self._dvalues = -(instance.observed - instance.start_values)

    def _values(self, x):
        key = (self, "omega")
        vals = x.cache.get(key)
        if vals is None:
            vals = x.cache[key] = omega_values(x, self.instance.omega)
        return vals

    def residual(self, x, lam):
        """(residual vector on Omega, its CSR matrix)."""
        key = (self, float(lam))
        res = x.cache.get(key)
        if res is None:
            r = self._values(x) - self.instance.curve_values(lam)
            res = x.cache[key] = (r, self.instance.omega.sparse(r))
        return res

    def value(self, x, lam):
        r, _ = self.residual(x, lam)
        return 0.5 * float(r @ r)

    def gradient(self, x, lam):
        _, R = self.residual(x, lam)
        return self.manifold.project_tangent(x, R)

    def hessian_apply(self, x, lam, xi):
        """Projected Gauss-Newton term plus the Weingarten curvature correction."""
        self.manifold.check_base(x, xi)
        omega = self.instance.omega
        _, R = self.residual(x, lam)
        h = self.manifold.project_tangent(x, omega.sparse(tangent_omega_values(xi, omega)))
        U, V, s = x.U, x.V, x.s
        t = (R @ xi.Vp) / s
        up = h.Up + t - U @ (U.T @ t)
        t = (R.T @ xi.Up) / s
        vp = h.Vp + t - V @ (V.T @ t)
        return FixedRankTangent(x, h.M, up, vp)

    def dgrad_dlambda(self, x, lam):
        """Pi(X) of -(A_Omega - P_Omega(A_0)); independent of lam."""
        return self.manifold.project_tangent(x, self.instance.omega.sparse(self._dvalues))

    def start_point(self) -> FixedRankPoint:
        return self.instance.start
