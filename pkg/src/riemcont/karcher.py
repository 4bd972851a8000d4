"""Parametric Karcher mean on SPD(n).

The homotopy moves every data matrix along the geodesic from a common base
point A_0, B_i(lam) = A_0 exp(lam log(A_0^{-1} A_i)), so X = A_0 is the exact
critical point at lam = 0:

    f(X, lam) = sum_i || log(B_i(lam)^{-1/2} X B_i(lam)^{-1/2}) ||_F^2

All K-term sums are batched over a (K, n, n) stack. Everything that depends
on (X, lam) only, namely the eigendecompositions of S_i = X^{-1/2} B_i X^{-1/2},
is memoized in the point's own cache.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DomainError
from .matfunc import check_symmetric, log_divided_differences, spd_pair_log
from .manifold import ParametricProblem
from .spd import SpdManifold, SpdPoint, SpdTangent

FORMAT = "riemcont-karcher"
VERSION = 1


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _eig_apply(q, values):
    """Batched Q diag(values) Q^T."""
    return _sym((q * values[..., None, :]) @ np.swapaxes(q, -1, -2))


@dataclass(frozen=True, eq=False)
class KarcherInstance:
    matrices: np.ndarray  # (K, n, n)
    base: np.ndarray  # A_0
    logs: np.ndarray  # log(A_0^{-1} A_i), generally non-symmetric
    # congruence frame: A_0^{-1/2} A_i A_0^{-1/2} = W_i diag(mu_i) W_i^T
    base_sqrt: np.ndarray
    mu: np.ndarray
    W: np.ndarray

    @classmethod
    def from_matrices(cls, matrices, base=None) -> "KarcherInstance":
        mats = np.asarray(matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] < 1:
            raise ContractError(f"expected a (K, n, n) stack, got {mats.shape}")
        n = mats.shape[1]
        mats = np.stack([check_symmetric(a) for a in mats])
        base = np.eye(n) if base is None else check_symmetric(base)
        p0 = SpdPoint.from_matrix(base)
        for a in mats:
            SpdPoint.from_matrix(a)
        c = _sym(p0.invsqrt @ mats @ p0.invsqrt)
        mu, W = np.linalg.eigh(c)
        logs = np.stack([spd_pair_log(base, a) for a in mats])
        return cls(mats, base, logs, p0.sqrt, mu, W)

    @property
    def K(self) -> int:
        return self.matrices.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    def curve(self, lam: float):
        """B_i(lam) and B_i'(lam) as (K, n, n) stacks."""
        r = self.base_sqrt
        powed = self.mu**lam
        if lam == 0:
            B = np.broadcast_to(self.base, self.matrices.shape).copy()
        else:
            B = _sym(r @ _eig_apply(self.W, powed) @ r)
        dB = _sym(r @ _eig_apply(self.W, powed * np.log(self.mu)) @ r)
        return B, dB

    def save(self, path) -> None:
        path = Path(path)
        header = {"format": FORMAT, "version": VERSION, "n": self.n, "K": self.K}
        if path.suffix == ".npz":
            np.savez(path, header=json.dumps(header), base=self.base, matrices=self.matrices)
            return
        doc = dict(header, base=self.base.ravel().tolist(), matrices=[a.ravel().tolist() for a in self.matrices])
        path.write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "KarcherInstance":
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as data:
                header = json.loads(str(data["header"]))
                base, mats = data["base"], data["matrices"]
        else:
            doc = json.loads(path.read_text())
            header = doc
            n = doc["n"]
            base = np.array(doc["base"], dtype=float).reshape(n, n)
            mats = np.array(doc["matrices"], dtype=float).reshape(doc["K"], n, n)
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise ContractError(f"unsupported instance header {header}")
        return cls.from_matrices(mats, base)


def _random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _assemble(rng, diags) -> np.ndarray:
    mats = []
    for d in diags:
        v = _random_orthogonal(rng, len(d))
        mats.append(_sym((v * d) @ v.T))
    return np.stack(mats)


def gen_easy_instance(n: int = 10, K: int = 75, seed: int = 0, cond: float = 1e3) -> KarcherInstance:
    """n-1 eigenvalues uniform in [1, 2]; the last is cond times the smallest of those."""
    rng = np.random.default_rng(seed)
    diags = []
    for _ in range(K):
        d = rng.uniform(1.0, 2.0, n - 1)
        diags.append(np.append(d, cond * d.min()))
    return KarcherInstance.from_matrices(_assemble(rng, diags))


def gen_pathological_instance(n: int = 10, K: int = 75, seed: int = 0) -> KarcherInstance:
    """Eigenvalues log-uniform in [0.1, 1] (lower half) and [1e6, 1e7] (upper half).

    The extremes of each band are pinned to 0.1 and 1e7 so every matrix has
    condition number 1e8. Odd n puts the extra eigenvalue in the lower band.
    """
    if n < 2:
        raise ContractError("pathological instance needs n >= 2")
    rng = np.random.default_rng(seed)
    n_hi = n // 2
    n_lo = n - n_hi
    diags = []
    for _ in range(K):
        lo = 10.0 ** rng.uniform(-1.0, 0.0, n_lo)
        hi = 10.0 ** rng.uniform(6.0, 7.0, n_hi)
        lo[np.argmin(lo)] = 0.1
        hi[np.argmax(hi)] = 1e7
        diags.append(np.concatenate([lo, hi]))
    return KarcherInstance.from_matrices(_assemble(rng, diags))


def gen_stationary_instance(n: int = 4, K: int = 3) -> KarcherInstance:
    """All A_i equal to A_0 = I, so nothing moves with lambda."""
    return KarcherInstance.from_matrices(np.stack([np.eye(n)] * K))


@dataclass
class _Local:
    B: np.ndarray
    dB: np.ndarray
    w: np.ndarray  # (K, n) eigenvalues of S_i
    Q: np.ndarray  # (K, n, n)
    logsum: np.ndarray  # sum_i log(S_i)
    dd: np.ndarray  # (K, n, n) log divided differences


class KarcherProblem(ParametricProblem):
    def __init__(self, instance: KarcherInstance):
        self.instance = instance
        self.manifold = SpdManifold(instance.n)

    def _local(self, x: SpdPoint, lam: float) -> _Local:
        key = (self, float(lam))
        loc = x.cache.get(key)
        if loc is None:
            B, dB = self.instance.curve(lam)
            S = _sym(x.invsqrt @ B @ x.invsqrt)
            w, Q = np.linalg.eigh(S)
            if np.any(w <= 0):
                raise DomainError(f"congruence eigenvalue {w.min():.3e} is not positive")
            logsum = _eig_apply(Q, np.log(w)).sum(axis=0)
            loc = _Local(B, dB, w, Q, logsum, log_divided_differences(w))
            x.cache[key] = loc
        return loc

    def value(self, x, lam):
        return float(np.sum(np.log(self._local(x, lam).w) ** 2))

    def gradient(self, x, lam):
        """-2 sum_i X log(X^{-1} B_i) = -2 X^{1/2} (sum_i log S_i) X^{1/2}."""
        loc = self._local(x, lam)
        return SpdTangent(x, _sym(-2.0 * x.sqrt @ loc.logsum @ x.sqrt))

    def _dlog_sum(self, loc: _Local, E: np.ndarray, scale_cols=None) -> np.ndarray:
        """sum_i D log(S_i)[E_i] for a (K, n, n) or (n, n) direction."""
        Qt = np.swapaxes(loc.Q, -1, -2)
        ehat = Qt @ E @ loc.Q
        coef = loc.dd if scale_cols is None else loc.dd * scale_cols[:, None, :]
        return (loc.Q @ (coef * ehat) @ Qt).sum(axis=0)

    def hessian_apply(self, x, lam, xi):
        self.manifold.check_base(x, xi)
        loc = self._local(x, lam)
        v = xi.matrix
        big_xi = x.invsqrt @ v @ x.invsqrt
        # D log(S_i)[Xi S_i] = Q (dd o (Q^T Xi Q) diag(w)) Q^T
        dsum = self._dlog_sum(loc, big_xi, scale_cols=loc.w)
        dgrad = -2.0 * (v @ x.invsqrt @ loc.logsum @ x.sqrt - x.sqrt @ dsum @ x.sqrt)
        g = -2.0 * x.sqrt @ loc.logsum @ x.sqrt
        corr = v @ x.inv @ g
        return SpdTangent(x, _sym(dgrad - 0.5 * (corr + corr.T)))

    def dgrad_dlambda(self, x, lam):
        """-2 sum_i X D log(X^{-1} B_i)[X^{-1} B_i'] in the congruence frame."""
        loc = self._local(x, lam)
        E = _sym(x.invsqrt @ loc.dB @ x.invsqrt)
        return SpdTangent(x, _sym(-2.0 * x.sqrt @ self._dlog_sum(loc, E) @ x.sqrt))

    def start_point(self) -> SpdPoint:
        return SpdPoint.from_matrix(self.instance.base)
