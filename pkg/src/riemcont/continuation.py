"""Riemannian predictor-corrector continuation.

The engine tracks a curve of critical points x(lam) of f(., lam) from a known
critical point at lam = 0 up to lam = 1. Each step predicts with either the
previous iterate (classical) or a retraction along the Davidenko tangent
t = -Hess^{-1}[d grad / d lam] (tangential), then corrects with Riemannian
Newton or trust region. In adaptive mode the step length comes from three
indicators measured at a trial step: the first Newton update norm (delta),
the first Newton contraction rate (kappa) and the turning angle of the
prediction tangent (alpha), which scale like h^2, h^2 and h.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    LinearSolveError,
    RetractionError,
    TangentUnavailable,
    TraversalFailed,
)
from .manifold import ParametricProblem, loglog_fit
from .solvers import (
    ConvergenceTrace,
    SolverConfig,
    hessian_rank_diagnostic,
    riemannian_newton,
    riemannian_trust_region,
    solve_newton_system,
)

log = logging.getLogger(__name__)

CLASSICAL = "classical"
TANGENTIAL = "tangential"
LAMBDA_SNAP = 1e-12


@dataclass
class StepSizeHyper:
    """Indicator thresholds; ``alpha_max_deg`` is in degrees."""

    kappa_max: float = 0.6
    alpha_max_deg: float = 3.0
    delta_max: float = 10.0
    min_factor: float = 0.5
    max_factor: float = 2.0

    def __post_init__(self):
        if min(self.kappa_max, self.alpha_max_deg, self.delta_max) <= 0:
            raise ValueError("thresholds must be positive")
        if self.alpha_max >= math.pi / 2:
            raise ValueError("alpha_max must be below 90 degrees")
        if not 0 < self.min_factor <= 1 <= self.max_factor:
            raise ValueError("clamp factors must bracket 1")

    @property
    def alpha_max(self) -> float:
        return math.radians(self.alpha_max_deg)


PRESETS = {
    "permissive": StepSizeHyper(0.6, 3.0, 10.0),
    "moderate": StepSizeHyper(0.3, 1.5, 5.0),
    "strict": StepSizeHyper(0.15, 0.75, 2.5),
}
PRESETS["1"], PRESETS["2"], PRESETS["3"] = PRESETS["permissive"], PRESETS["moderate"], PRESETS["strict"]


@dataclass
class ContinuationConfig:
    prediction: str = TANGENTIAL
    n_steps: int = 10
    adaptive: bool = False
    corrector: str = "newton"  # newton | trust-region
    solver: SolverConfig = field(default_factory=SolverConfig)
    hyper: StepSizeHyper = field(default_factory=StepSizeHyper)
    transport: str = "parallel"  # parallel | projection
    step_rule: str = "consistent"  # consistent | literal
    tangent_rtol: float = 1e-10
    indicator_rtol: float = 1e-10
    max_retries: int = 10
    h_min: float = 1e-10
    strict: bool = False
    verbose: bool = False

    def __post_init__(self):
        if self.prediction not in (CLASSICAL, TANGENTIAL):
            raise ValueError(f"unknown prediction mode {self.prediction!r}")
        if self.corrector not in ("newton", "trust-region"):
            raise ValueError(f"unknown corrector {self.corrector!r}")
        if self.transport not in ("parallel", "projection"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.step_rule not in ("consistent", "literal"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not 0 < self.h_min < 1:
            raise ValueError("h_min must lie in (0, 1)")
        if self.adaptive and self.prediction != TANGENTIAL:
            raise ValueError("adaptive step size needs tangential prediction")


@dataclass
class Indicators:
    delta: float
    kappa: float | None
    alpha: float | None
    h: float


@dataclass
class StepRecord:
    step: int
    lam: float
    h: float
    predictor: str
    corrector: ConvergenceTrace
    corrector_iterations: int  # summed over retries
    grad_norm: float
    wall_time: float
    retries: int = 0
    h_trial: float | None = None
    h_rule: float | None = None
    indicators: Indicators | None = None
    hess_min: float | None = None


@dataclass
class ContinuationTrace:
    steps: list[StepRecord] = field(default_factory=list)
    total_time: float = 0.0

    @property
    def corrections(self) -> int:
        return len(self.steps)

    @property
    def total_iterations(self) -> int:
        return sum(s.corrector_iterations for s in self.steps)

    @property
    def corrector_time(self) -> float:
        return sum(s.wall_time for s in self.steps)


@dataclass
class HomotopySolution:
    points: list
    lambdas: list[float]
    trace: ContinuationTrace

    @property
    def final(self):
        return self.points[-1]


def davidenko_tangent(problem: ParametricProblem, x, lam, rtol=1e-10, maxiter=1000):
    """t = -Hess f(x, lam)^{-1} [d grad f / d lam]."""
    try:
        return solve_newton_system(problem, lam, x, -problem.dgrad_dlambda(x, lam), rtol, maxiter)
    except LinearSolveError as exc:
        raise TangentUnavailable(f"tangent solve failed: {exc}", exc.residual) from exc


def predict(manifold, x, t, h, mode):
    if mode == CLASSICAL or h == 0:
        return x
    if t is None:
        raise ContractError("tangential prediction needs a tangent vector")
    return manifold.retract(x, h * t)


def _transport(manifold, kind, x, y, xi):
    if kind == "projection":
        return manifold.vector_transport(x, y, xi)
    return manifold.transport(x, y, xi)


def indicators(problem: ParametricProblem, x, lam, h, t, transport="parallel", rtol=1e-10, maxiter=1000) -> Indicators:
    """delta, kappa, alpha at trial step h from three extra Hessian solves.

    kappa is None when delta == 0 and alpha is None when t == 0. Raises
    LinearSolveError or RetractionError when the trial point is unusable.
    """
    M = problem.manifold
    lam_h = lam + h
    y = M.retract(x, h * t)
    t_y = davidenko_tangent(problem, y, lam_h, rtol, maxiter)
    n_y = solve_newton_system(problem, lam_h, y, -problem.gradient(y, lam_h), rtol, maxiter)
    delta = M.norm(y, n_y)
    kappa = None
    if delta > 0:
        z = M.retract(y, n_y)
        n_z = solve_newton_system(problem, lam_h, z, -problem.gradient(z, lam_h), rtol, maxiter)
        kappa = M.norm(z, n_z) / delta
    alpha = None
    tn = M.norm(x, t)
    if tn > 0:
        back = _transport(M, transport, y, x, t_y)
        bn = M.norm(x, back)
        if bn > 0:
            c = M.inner(x, t, back) / (tn * bn)
            alpha = math.acos(min(1.0, max(-1.0, c)))
    return Indicators(delta, kappa, alpha, h)


def step_factor(ind: Indicators, hyper: StepSizeHyper, rule: str = "consistent") -> float:
    """Clamped multiplier for the trial step.

    ``consistent`` uses the leading-order models delta ~ h^2, kappa ~ h^2,
    alpha ~ h to solve for the largest admissible h, giving factors
    sqrt(delta_max / delta), sqrt(kappa_max / kappa), alpha_max / alpha.
    ``literal`` plugs the coefficient estimates delta / h^2, kappa / h^2,
    alpha / h directly into the factor expressions instead.
    """
    h = ind.h
    factors = [hyper.max_factor]
    if rule == "literal":
        d, k, a = ind.delta / h**2, (ind.kappa or 0.0) / h**2, (ind.alpha or 0.0) / h
    else:
        d, k, a = ind.delta, ind.kappa or 0.0, ind.alpha or 0.0
    if d > 0:
        factors.append(math.sqrt(hyper.delta_max / d))
    if k > 0:
        factors.append(math.sqrt(hyper.kappa_max / k))
    if a > 0:
        factors.append(hyper.alpha_max / a)
    return max(hyper.min_factor, min(factors))


@dataclass
class AdaptiveStep:
    h: float  # clamped so lam + h <= 1
    h_rule: float
    indicators: Indicators | None


def adaptive_step(h_trial, x, lam, t, problem, hyper: StepSizeHyper, transport="parallel", rule="consistent", rtol=1e-10, maxiter=1000) -> AdaptiveStep:
    """New step size from indicators at the trial step; halves on indicator failure."""
    if not h_trial > 0:
        raise ContractError("trial step must be positive")
    try:
        ind = indicators(problem, x, lam, h_trial, t, transport, rtol, maxiter)
    except (LinearSolveError, RetractionError) as exc:
        log.info("indicator failure at lam=%.6g h=%.3g: %s", lam, h_trial, exc)
        ind = None
        h_rule = h_trial * hyper.min_factor
    else:
        h_rule = h_trial * step_factor(ind, hyper, rule)
    return AdaptiveStep(min(h_rule, 1.0 - lam), h_rule, ind)


def correct(problem, lam, y, config: ContinuationConfig):
    if config.corrector == "trust-region":
        return riemannian_trust_region(problem, lam, y, config.solver)
    return riemannian_newton(problem, lam, y, config.solver)


def rnc(problem: ParametricProblem, x0, config: ContinuationConfig | None = None) -> HomotopySolution:
    """Predictor-corrector continuation from (x0, 0) to lam = 1.

    Failed corrections (gradient above tol after the corrector, or a
    retraction leaving the manifold) halve the step and retry, at most
    ``max_retries`` times; ``strict`` aborts on the first failure.
    """
    config = config or ContinuationConfig()
    M = problem.manifold
    tol = config.solver.tol
    g0 = problem.grad_norm(x0, 0.0)
    if g0 > tol:
        raise ContractError(f"start point is not critical: ||grad|| = {g0:.3e} > tol")
    start = time.perf_counter()
    trace = ContinuationTrace()
    solution = HomotopySolution([x0], [0.0], trace)
    x, lam, h, k = x0, 0.0, 1.0 / config.n_steps, 0
    maxiter = config.solver.cg_maxiter

    def fail(msg):
        trace.total_time = time.perf_counter() - start
        raise TraversalFailed(f"Traversing failed at step {k}: {msg}", k, trace, solution)

    while lam < 1.0:
        mode = config.prediction
        t = None
        h_trial = h_rule = None
        ind = None
        if mode == TANGENTIAL:
            try:
                t = davidenko_tangent(problem, x, lam, config.tangent_rtol, maxiter)
            except TangentUnavailable as exc:
                if config.strict:
                    fail(str(exc))
                log.warning("tangent unavailable at lam=%.6g, using classical prediction", lam)
                mode = "classical-fallback"
            if t is not None and config.adaptive:
                h_trial = h
                step = adaptive_step(
                    h_trial, x, lam, t, problem, config.hyper, config.transport,
                    config.step_rule, config.indicator_rtol, maxiter,
                )
                h, h_rule, ind = step.h_rule, step.h_rule, step.indicators
                if h < config.h_min and lam + h < 1.0:
                    fail(f"adaptive step {h:.3e} fell below h_min")
        retries = 0
        spent = 0
        wall = 0.0
        while True:
            # snap to 1 so accumulated roundoff never leaves a sliver step
            lam_new = 1.0 if lam + h >= 1.0 - LAMBDA_SNAP else lam + h
            h_step = lam_new - lam
            ok = False
            ctrace = None
            try:
                y = predict(M, x, t, h_step, CLASSICAL if mode != TANGENTIAL else mode)
                tic = time.perf_counter()
                x_new, ctrace = correct(problem, lam_new, y, config)
                wall += time.perf_counter() - tic
                spent += ctrace.iterations
                gn = problem.grad_norm(x_new, lam_new)
                ok = gn <= tol
            except RetractionError as exc:
                log.info("prediction left the manifold at lam=%.6g: %s", lam, exc)
            if ok:
                break
            if config.strict or retries >= config.max_retries:
                fail("corrector did not reach tol")
            retries += 1
            h = h / 2.0
            log.info("step %d: correction failed, retrying with h=%.3g", k, h)
        record = StepRecord(
            step=k, lam=lam_new, h=h_step, predictor=mode, corrector=ctrace,
            corrector_iterations=spent, grad_norm=gn, wall_time=wall, retries=retries,
            h_trial=h_trial, h_rule=h_rule, indicators=ind,
        )
        if config.verbose:
            record.hess_min = hessian_rank_diagnostic(problem, lam_new, x_new)
            log.info(
                "step %d lam=%.6f h=%.4g iters=%d |grad|=%.2e hess_min=%.3e",
                k, lam_new, h_step, spent, gn, record.hess_min,
            )
        trace.steps.append(record)
        solution.points.append(x_new)
        solution.lambdas.append(lam_new)
        x, lam = x_new, lam_new
        k += 1
    trace.total_time = time.perf_counter() - start
    return solution


def direct(problem: ParametricProblem, x0, config: ContinuationConfig | None = None) -> HomotopySolution:
    """Solve f(., 1) from x0 with the configured corrector, recorded as one correction."""
    config = config or ContinuationConfig()
    start = time.perf_counter()
    x, ctrace = correct(problem, 1.0, x0, config)
    wall = time.perf_counter() - start
    gn = problem.grad_norm(x, 1.0)
    rec = StepRecord(0, 1.0, 1.0, "direct", ctrace, ctrace.iterations, gn, wall)
    trace = ContinuationTrace([rec], wall)
    return HomotopySolution([x0, x], [0.0, 1.0], trace)


# -- empirical order and indicator scaling -----------------------------------


@dataclass
class SlopeFit:
    hs: np.ndarray
    values: np.ndarray
    slope: float | None
    r2: float | None
    excluded: list[float] = field(default_factory=list)


def fit_slope(hs, values, exclude=(), floor=1e-14) -> SlopeFit:
    """Log-log slope, skipping excluded h and reporting None on degenerate data."""
    hs = np.asarray(hs, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.array([h not in exclude for h in hs])
    vals = values[keep]
    if keep.sum() < 2 or np.any(~np.isfinite(vals)) or np.any(vals <= floor):
        return SlopeFit(hs, values, None, None, list(exclude))
    slope, r2 = loglog_fit(hs[keep], vals)
    return SlopeFit(hs, values, slope, r2, list(exclude))


def default_h_grid(lo=3, hi=8):
    return np.array([2.0**-p for p in range(lo, hi + 1)])


def on_curve_point(problem: ParametricProblem, lam, x_start, tol=1e-10):
    """Tightly converged critical point of f(., lam) by Newton from x_start."""
    x, tr = riemannian_newton(problem, lam, x_start, SolverConfig(tol=tol, max_inner=200))
    if tr.reason != "tol-reached":
        raise RuntimeError(f"reference solve failed at lam={lam}: {tr.reason}")
    return x


def estimate_prediction_order(problem: ParametricProblem, x, lam, mode, hs=None, ref_tol=1e-10) -> SlopeFit:
    """Slope of log d(x(lam + h), y(h)) against log h.

    Requires a geometry with a closed-form distance; the reference points are
    tightly converged Newton solves started from the prediction.
    """
    M = problem.manifold
    hs = default_h_grid() if hs is None else np.asarray(hs, dtype=float)
    t = davidenko_tangent(problem, x, lam) if mode == TANGENTIAL else None
    dists = []
    for h in hs:
        y = predict(M, x, t, h, mode)
        ref = on_curve_point(problem, lam + h, y, ref_tol)
        dists.append(M.distance(ref, y))
    return fit_slope(hs, dists)


def indicator_scaling(problem: ParametricProblem, x, lam, hs=None, transport="parallel", rtol=1e-12, maxiter=1000):
    """Indicators over an h grid with log-log slope fits for delta, kappa and alpha."""
    hs = default_h_grid() if hs is None else np.asarray(hs, dtype=float)
    t = davidenko_tangent(problem, x, lam, rtol, maxiter)
    rows = [indicators(problem, x, lam, h, t, transport, rtol, maxiter) for h in hs]
    nan = float("nan")
    delta = np.array([r.delta for r in rows])
    kappa = np.array([nan if r.kappa is None else r.kappa for r in rows])
    alpha = np.array([nan if r.alpha is None else r.alpha for r in rows])
    return rows, {"delta": fit_slope(hs, delta), "kappa": fit_slope(hs, kappa), "alpha": fit_slope(hs, alpha)}
