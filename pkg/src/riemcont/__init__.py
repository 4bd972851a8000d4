"""Riemannian continuation for parametric optimization on SPD and fixed-rank manifolds."""

__version__ = "0.1.0"

from .continuation import (
    PRESETS,
    ContinuationConfig,
    HomotopySolution,
    StepSizeHyper,
    adaptive_step,
    davidenko_tangent,
    direct,
    estimate_prediction_order,
    indicators,
    predict,
    rnc,
)
from .solvers import SolverConfig, riemannian_newton, riemannian_trust_region

__all__ = [
    "PRESETS",
    "ContinuationConfig",
    "HomotopySolution",
    "SolverConfig",
    "StepSizeHyper",
    "adaptive_step",
    "davidenko_tangent",
    "direct",
    "estimate_prediction_order",
    "indicators",
    "predict",
    "riemannian_newton",
    "riemannian_trust_region",
    "rnc",
]
