"""Correction-phase solvers: Riemannian Newton with matrix-free CG, and
Riemannian trust region with Steihaug-Toint truncated CG."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LinearSolveError, RetractionError
from .manifold import ParametricProblem

TOL_REACHED = "tol-reached"
MAX_ITERS = "max-iters"
LINEAR_SOLVE_FAILURE = "linear-solve-failure"
TR_RADIUS_COLLAPSE = "tr-radius-collapse"
RETRACTION_FAILURE = "retraction-failure"


@dataclass
class SolverConfig:
    tol: float = 1e-6
    max_inner: int = 5000
    # linear solves; cg_rtol=None selects the forcing term min(0.5, sqrt(||grad||))
    cg_rtol: float | None = 1e-10
    cg_maxiter: int = 1000
    stagnation_rtol: float = 0.5
    # trust region; None radii fall back to the geometry's typical distance,
    # or with tr_grad_scale set, delta0 = scale * ||grad(x0)|| and delta_bar = 100 delta0
    tr_delta_bar: float | None = None
    tr_delta0: float | None = None
    tr_grad_scale: float | None = None
    tr_rho_accept: float = 0.1
    tr_kappa: float = 0.1
    tr_theta: float = 1.0
    tr_maxinner: int | None = None
    tr_min_radius: float = 1e-14

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_inner < 1 or self.cg_maxiter < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class ConvergenceTrace:
    grad_norms: list[float] = field(default_factory=list)
    iterations: int = 0
    reason: str = ""
    values: list[float] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)
    accepted: list[bool] = field(default_factory=list)

    @property
    def final_norm(self) -> float:
        return self.grad_norms[-1]


@dataclass
class CGResult:
    solution: object
    residual: float  # relative
    iterations: int
    status: str  # converged | maxiter | negative-curvature


def conjugate_gradient(manifold, x, apply, rhs, rtol: float, maxiter: int) -> CGResult:
    """CG for apply(xi) = rhs on T_x M using the manifold metric."""
    inner = manifold.inner
    bnorm = manifold.norm(x, rhs)
    sol = manifold.zero(x)
    if bnorm == 0.0:
        return CGResult(sol, 0.0, 0, "converged")
    r = rhs
    p = r
    rr = inner(x, r, r)
    target = (rtol * bnorm) ** 2
    for it in range(1, maxiter + 1):
        hp = apply(p)
        php = inner(x, p, hp)
        if not php > 0:
            return CGResult(sol, math.sqrt(rr) / bnorm, it, "negative-curvature")
        alpha = rr / php
        sol = sol + alpha * p
        r = r - alpha * hp
        rr_new = inner(x, r, r)
        if rr_new <= target:
            return CGResult(sol, math.sqrt(rr_new) / bnorm, it, "converged")
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(sol, math.sqrt(rr) / bnorm, maxiter, "maxiter")


def solve_newton_system(problem: ParametricProblem, lam, x, rhs, rtol: float = 1e-10, maxiter: int = 1000, stagnation_rtol: float = 0.5):
    """Solve Hess f(x, lam)[xi] = rhs by CG; raise LinearSolveError on failure."""
    res = conjugate_gradient(
        problem.manifold, x, lambda v: problem.hessian_apply(x, lam, v), rhs, rtol, maxiter
    )
    if res.status == "negative-curvature":
        raise LinearSolveError("non-positive curvature in Hessian solve", res.residual)
    if res.status == "maxiter" and res.residual > max(stagnation_rtol, rtol):
        raise LinearSolveError("Hessian solve stagnated", res.residual)
    return res.solution


def newton_direction(problem, lam, x, grad, rtol, config: SolverConfig):
    return solve_newton_system(problem, lam, x, -grad, rtol, config.cg_maxiter, config.stagnation_rtol)


def _forcing(config: SolverConfig, gnorm: float) -> float:
    return config.cg_rtol if config.cg_rtol is not None else min(0.5, math.sqrt(gnorm))


def riemannian_newton(problem: ParametricProblem, lam, x0, config: SolverConfig | None = None):
    """Newton iteration with retraction until ||grad|| <= tol or max_inner steps."""
    config = config or SolverConfig()
    M = problem.manifold
    x = x0
    g = problem.gradient(x, lam)
    gn = M.norm(x, g)
    trace = ConvergenceTrace(grad_norms=[gn], values=[problem.value(x, lam)])
    while gn > config.tol:
        if trace.iterations >= config.max_inner:
            trace.reason = MAX_ITERS
            return x, trace
        try:
            step = newton_direction(problem, lam, x, g, _forcing(config, gn), config)
            x = M.retract(x, step)
        except LinearSolveError:
            trace.reason = LINEAR_SOLVE_FAILURE
            return x, trace
        except RetractionError:
            trace.reason = RETRACTION_FAILURE
            return x, trace
        trace.iterations += 1
        g = problem.gradient(x, lam)
        gn = M.norm(x, g)
        trace.grad_norms.append(gn)
        trace.values.append(problem.value(x, lam))
        trace.accepted.append(True)
    trace.reason = TOL_REACHED
    return x, trace


def truncated_cg(problem, lam, x, grad, radius, kappa=0.1, theta=1.0, maxiter=None):
    """Steihaug-Toint tCG for min <g, eta> + 1/2 <H eta, eta> subject to ||eta|| <= radius.

    Returns (eta, H eta, iterations, stop) with stop in
    {"converged", "boundary", "negative-curvature", "maxiter"}.
    """
    M = problem.manifold
    inner = M.inner
    maxiter = maxiter or M.dim
    eta = M.zero(x)
    heta = M.zero(x)
    r = grad
    rr = inner(x, r, r)
    r0 = math.sqrt(rr)
    if r0 == 0.0:
        return eta, heta, 0, "converged"
    target = r0 * min(r0**theta, kappa)
    delta = -r
    e_pe = 0.0
    e_pd = 0.0
    d_pd = rr
    for it in range(1, maxiter + 1):
        hdelta = problem.hessian_apply(x, lam, delta)
        d_hd = inner(x, delta, hdelta)
        alpha = rr / d_hd if d_hd != 0 else math.inf
        e_pe_new = e_pe + 2.0 * alpha * e_pd + alpha**2 * d_pd
        if d_hd <= 0 or e_pe_new >= radius**2:
            tau = (-e_pd + math.sqrt(e_pd**2 + d_pd * (radius**2 - e_pe))) / d_pd
            stop = "negative-curvature" if d_hd <= 0 else "boundary"
            return eta + tau * delta, heta + tau * hdelta, it, stop
        e_pe = e_pe_new
        eta = eta + alpha * delta
        heta = heta + alpha * hdelta
        r = r + alpha * hdelta
        rr_new = inner(x, r, r)
        if math.sqrt(rr_new) <= target:
            return eta, heta, it, "converged"
        beta = rr_new / rr
        rr = rr_new
        delta = -r + beta * delta
        e_pd = beta * (e_pd + alpha * d_pd)
        d_pd = rr + beta**2 * d_pd
    return eta, heta, maxiter, "maxiter"


def _initial_radii(config: SolverConfig, manifold, gnorm: float):
    if config.tr_grad_scale is not None and gnorm > 0:
        delta0 = config.tr_grad_scale * gnorm
        return config.tr_delta_bar or 100.0 * delta0, config.tr_delta0 or delta0
    delta_bar = config.tr_delta_bar or manifold.typical_dist
    return delta_bar, config.tr_delta0 or delta_bar / 8.0


def riemannian_trust_region(problem: ParametricProblem, lam, x0, config: SolverConfig | None = None):
    """RTR: tCG model minimization, rho test, radius update."""
    config = config or SolverConfig()
    M = problem.manifold
    x = x0
    f = problem.value(x, lam)
    g = problem.gradient(x, lam)
    gn = M.norm(x, g)
    delta_bar, radius = _initial_radii(config, M, gn)
    trace = ConvergenceTrace(grad_norms=[gn], values=[f])
    eps = np.finfo(float).eps
    while gn > config.tol:
        if trace.iterations >= config.max_inner:
            trace.reason = MAX_ITERS
            return x, trace
        eta, heta, inner_its, stop = truncated_cg(
            problem, lam, x, g, radius, config.tr_kappa, config.tr_theta, config.tr_maxinner
        )
        model_dec = -(M.inner(x, g, eta) + 0.5 * M.inner(x, heta, eta))
        try:
            x_new = M.retract(x, eta)
            f_new = problem.value(x_new, lam)
        except RetractionError:
            x_new, f_new = None, math.inf
        reg = max(1.0, abs(f)) * eps * 1e3
        rho = (f - f_new + reg) / (model_dec + reg)
        if not rho >= 0.25 or model_dec < 0:
            radius /= 4.0
        elif rho > 0.75 and stop in ("boundary", "negative-curvature"):
            radius = min(2.0 * radius, delta_bar)
        accept = model_dec >= 0 and rho > config.tr_rho_accept
        if accept:
            x, f = x_new, f_new
            g = problem.gradient(x, lam)
            gn = M.norm(x, g)
        trace.iterations += 1
        trace.grad_norms.append(gn)
        trace.values.append(f)
        trace.inner_iterations.append(inner_its)
        trace.accepted.append(bool(accept))
        if radius < config.tr_min_radius:
            trace.reason = TR_RADIUS_COLLAPSE
            return x, trace
    trace.reason = TOL_REACHED
    return x, trace


def hessian_rank_diagnostic(problem: ParametricProblem, lam, x, steps: int = 40, seed: int = 0) -> float:
    """Lanczos estimate of the smallest Hessian eigenvalue (full reorthogonalization).

    Advisory only: a value near zero or negative flags a (nearly) singular
    Hessian, where lambda-parametrizability of the critical curve can fail.
    """
    M = problem.manifold
    rng = np.random.default_rng(seed)
    q = M.random_tangent(x, rng)
    q = M.project_tangent(x, M.embed_tangent(q))
    q = q / M.norm(x, q)
    basis = [q]
    alphas, betas = [], []
    for j in range(min(steps, M.dim)):
        w = problem.hessian_apply(x, lam, basis[-1])
        a = M.inner(x, w, basis[-1])
        alphas.append(a)
        for b in basis:
            w = w - M.inner(x, w, b) * b
        beta = M.norm(x, w)
        if beta < 1e-12 * max(abs(a), 1.0) or j == min(steps, M.dim) - 1:
            break
        betas.append(beta)
        basis.append(w / beta)
    t = np.diag(alphas) + np.diag(betas[: len(alphas) - 1], 1) + np.diag(betas[: len(alphas) - 1], -1)
    return float(np.linalg.eigvalsh(t)[0])
