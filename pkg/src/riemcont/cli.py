"""Command-line experiments: direct vs continuation runs, order and indicator
studies, and N_steps sweeps. Everything is configured by strict JSON files.

    riemcont run --config configs/karcher_pathological.json --out out/
    riemcont orders --config configs/karcher_easy.json
    riemcont indicators --config configs/completion_small.json --preset strict
    riemcont sweep --config configs/completion_sweep.json

Exit codes: 0 success, 2 config error, 3 traversal failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .completion import CompletionInstance, CompletionProblem, build_instance
from .continuation import (
    PRESETS,
    ContinuationConfig,
    StepSizeHyper,
    default_h_grid,
    direct,
    estimate_prediction_order,
    on_curve_point,
    rnc,
)
from .errors import ContractError, DistanceUnavailable, TraversalFailed
from .karcher import (
    KarcherInstance,
    KarcherProblem,
    gen_easy_instance,
    gen_pathological_instance,
    gen_stationary_instance,
)
from .solvers import SolverConfig

log = logging.getLogger("riemcont")

EXIT_OK, EXIT_CONFIG, EXIT_TRAVERSAL = 0, 2, 3
WORKERS_ENV = "RIEMCONT_WORKERS"
TRACE_COLUMNS = ["step", "lambda", "h", "corrector_iter", "grad_norm", "delta", "kappa", "alpha", "wall_ms"]
SUMMARY_COLUMNS = ["method", "status", "corrections", "correction_iterations", "time_s"]


class ConfigError(ValueError):
    pass


# -- config schema --------------------------------------------------------------

KARCHER_KEYS = {"kind", "n", "K", "seed", "cond", "path"}
COMPLETION_KEYS = {"m", "n", "k", "oversampling", "sigma", "seed", "path"}
CONTINUATION_KEYS = {f.name for f in dataclasses.fields(ContinuationConfig)} - {"solver", "hyper"}
HYPER_KEYS = {f.name for f in dataclasses.fields(StepSizeHyper)}


def _strict(section: str, data, allowed) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    return dict(data)


@dataclass
class MethodSpec:
    label: str
    kind: str = "rnc"  # rnc | direct
    overrides: dict = field(default_factory=dict)


@dataclass
class OrdersSpec:
    lam: float = 0.5
    h_exponents: tuple = (3, 8)
    modes: tuple = ("classical", "tangential")
    ref_tol: float = 1e-10


@dataclass
class SweepSpec:
    n_steps: tuple = (1, 2, 3, 4, 5, 6)
    prediction: str = "tangential"
    include_direct: bool = True


@dataclass
class ExperimentConfig:
    problem: str
    instance: dict
    solver: dict
    continuation: dict
    methods: list
    orders: OrdersSpec
    indicator_presets: tuple
    sweep: SweepSpec
    output: str
    timing: bool
    raw: dict

    @property
    def seed(self) -> int:
        return int(self.instance.get("seed", 0))


TOP_KEYS = {"problem", "instance", "solver", "continuation", "methods", "orders", "indicators", "sweep", "output", "timing"}


def parse_config(doc: dict) -> ExperimentConfig:
    doc = _strict("config", doc, TOP_KEYS)
    problem = doc.get("problem")
    if problem not in ("karcher", "completion"):
        raise ConfigError(f"problem must be 'karcher' or 'completion', got {problem!r}")
    instance = _strict("instance", doc.get("instance", {}), KARCHER_KEYS if problem == "karcher" else COMPLETION_KEYS)
    solver = _strict("solver", doc.get("solver", {}), {f.name for f in dataclasses.fields(SolverConfig)})
    cont = _strict("continuation", doc.get("continuation", {}), CONTINUATION_KEYS | {"preset", "hyper"})
    methods = []
    for i, m in enumerate(doc.get("methods", [{"label": "direct", "kind": "direct"}, {"label": "rnc"}])):
        m = _strict(f"methods[{i}]", m, CONTINUATION_KEYS | {"preset", "hyper", "label", "kind"})
        label = m.pop("label", f"method{i}")
        kind = m.pop("kind", "rnc")
        if kind not in ("rnc", "direct"):
            raise ConfigError(f"methods[{i}]: kind must be 'rnc' or 'direct'")
        methods.append(MethodSpec(label, kind, m))
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ConfigError("method labels must be unique")
    orders = OrdersSpec(**_strict("orders", doc.get("orders", {}), {f.name for f in dataclasses.fields(OrdersSpec)}))
    ind = _strict("indicators", doc.get("indicators", {}), {"presets"})
    presets = tuple(ind.get("presets", ("permissive", "moderate", "strict")))
    for name in presets:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
    sweep = SweepSpec(**_strict("sweep", doc.get("sweep", {}), {f.name for f in dataclasses.fields(SweepSpec)}))
    cfg = ExperimentConfig(
        problem, instance, solver, cont, methods, orders, presets, sweep,
        str(doc.get("output", "out")), bool(doc.get("timing", False)), doc,
    )
    # surface value errors now rather than mid-run
    for spec in methods:
        continuation_config(cfg, spec.overrides)
    continuation_config(cfg, {})
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def continuation_config(cfg: ExperimentConfig, overrides: dict) -> ContinuationConfig:
    merged = {**cfg.continuation, **overrides}
    preset = merged.pop("preset", None)
    hyper = merged.pop("hyper", None)
    if preset is not None and hyper is not None:
        raise ConfigError("give either 'preset' or 'hyper', not both")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        hyper = PRESETS[preset]
    elif hyper is not None:
        hyper = StepSizeHyper(**_strict("hyper", hyper, HYPER_KEYS))
    else:
        hyper = StepSizeHyper()
    if "corrector" not in merged:
        merged["corrector"] = "newton" if cfg.problem == "karcher" else "trust-region"
    try:
        return ContinuationConfig(solver=SolverConfig(**cfg.solver), hyper=hyper, **merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def apply_cli_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.instance["seed"] = args.seed
    if args.out is not None:
        cfg.output = args.out
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        cfg.continuation["preset"] = args.preset
        cfg.continuation.pop("hyper", None)
        for m in cfg.methods:
            m.overrides.pop("hyper", None)
            m.overrides.pop("preset", None)
        cfg.indicator_presets = (args.preset,)
    if args.strict_abort:
        cfg.continuation["strict"] = True
    if args.verbose:
        cfg.continuation["verbose"] = True
    if args.timing:
        cfg.timing = True
    return cfg


# -- problems ---------------------------------------------------------------------


def build_problem(cfg: ExperimentConfig):
    inst = dict(cfg.instance)
    path = inst.pop("path", None)
    if cfg.problem == "karcher":
        if path is not None:
            return KarcherProblem(KarcherInstance.load(path))
        kind = inst.pop("kind", "easy")
        if kind == "easy":
            return KarcherProblem(gen_easy_instance(**inst))
        if kind == "pathological":
            inst.pop("cond", None)
            return KarcherProblem(gen_pathological_instance(**inst))
        if kind == "stationary":
            inst.pop("seed", None)
            inst.pop("cond", None)
            return KarcherProblem(gen_stationary_instance(**inst))
        raise ConfigError(f"unknown karcher instance kind {kind!r}")
    if path is not None:
        return CompletionProblem(CompletionInstance.load(path))
    return CompletionProblem(build_instance(**inst))


# -- output -----------------------------------------------------------------------


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_") or "run"


def trace_rows(trace, timing: bool):
    for r in trace.steps:
        ind = r.indicators
        yield [
            r.step, r.lam, r.h, r.corrector_iterations, r.grad_norm,
            None if ind is None else ind.delta,
            None if ind is None else ind.kappa,
            None if ind is None else ind.alpha,
            r.wall_time * 1e3 if timing else None,
        ]


def iteration_rows(trace):
    for r in trace.steps:
        if r.corrector is None:
            continue
        for j, g in enumerate(r.corrector.grad_norms):
            yield [r.step, j, g]


@dataclass
class RunResult:
    label: str
    status: str
    corrections: int
    iterations: int
    time_s: float
    message: str = ""


def run_method(problem, cfg: ExperimentConfig, spec: MethodSpec, outdir: Path) -> RunResult:
    ccfg = continuation_config(cfg, spec.overrides)
    x0 = problem.start_point()
    status, message = "ok", ""
    try:
        sol = direct(problem, x0, ccfg) if spec.kind == "direct" else rnc(problem, x0, ccfg)
        trace = sol.trace
        if spec.kind == "direct" and trace.steps[0].grad_norm > ccfg.solver.tol:
            status, message = "failed", f"direct solve ended with {trace.steps[0].corrector.reason}"
    except TraversalFailed as exc:
        trace = exc.trace
        status, message = "failed", str(exc)
        log.error("%s: %s", spec.label, exc)
    name = slug(spec.label)
    write_csv(outdir / f"trace_{name}.csv", TRACE_COLUMNS, trace_rows(trace, cfg.timing))
    write_csv(outdir / f"iterations_{name}.csv", ["step", "iteration", "grad_norm"], iteration_rows(trace))
    return RunResult(spec.label, status, trace.corrections, trace.total_iterations, trace.corrector_time, message)


def summary_rows(results, timing: bool):
    for r in results:
        yield [r.label, r.status, r.corrections, r.iterations, r.time_s if timing else None]


def write_manifest(outdir: Path, cfg: ExperimentConfig, command: str, results=()) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.raw,
        "effective": {
            "instance": cfg.instance,
            "continuation": cfg.continuation,
            "output": cfg.output,
            "timing": cfg.timing,
        },
        "results": [{"method": r.label, "status": r.status, "message": r.message} for r in results],
    }
    (outdir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


# -- commands ---------------------------------------------------------------------


def cmd_run(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    results = [run_method(problem, cfg, spec, outdir) for spec in cfg.methods]
    write_csv(outdir / "summary.csv", SUMMARY_COLUMNS, summary_rows(results, cfg.timing))
    write_manifest(outdir, cfg, "run", results)
    for r in results:
        print(f"{r.label:<32} {r.status:<7} corrections={r.corrections:<4} iterations={r.iterations}")
    return EXIT_TRAVERSAL if any(r.status != "ok" for r in results) else EXIT_OK


def cmd_orders(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    spec = cfg.orders
    lo, hi = spec.h_exponents
    hs = default_h_grid(lo, hi)
    x = on_curve_point(problem, spec.lam, problem.start_point(), spec.ref_tol)
    rows, fits = [], []
    for mode in spec.modes:
        try:
            fit = estimate_prediction_order(problem, x, spec.lam, mode, hs, spec.ref_tol)
        except DistanceUnavailable as exc:
            raise ConfigError(f"orders needs a geometry with a distance: {exc}") from exc
        rows += [[mode, h, d] for h, d in zip(fit.hs, fit.values)]
        flagged = fit.r2 is None or fit.r2 < 0.95
        fits.append([mode, fit.slope, fit.r2, flagged])
        print(f"{mode:<11} slope={fmt(fit.slope) or 'n/a'} r2={fmt(fit.r2) or 'n/a'}{'  FLAGGED' if flagged else ''}")
    write_csv(outdir / "orders.csv", ["mode", "h", "distance"], rows)
    write_csv(outdir / "order_fits.csv", ["mode", "slope", "r2", "flagged"], fits)
    write_manifest(outdir, cfg, "orders")
    return EXIT_OK


def cmd_indicators(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    rows, results = [], []
    for name in cfg.indicator_presets:
        spec = MethodSpec(f"adaptive-{name}", "rnc", {"adaptive": True, "prediction": "tangential", "preset": name})
        ccfg = continuation_config(cfg, spec.overrides)
        try:
            trace = rnc(problem, problem.start_point(), ccfg).trace
            status, message = "ok", ""
        except TraversalFailed as exc:
            trace, status, message = exc.trace, "failed", str(exc)
        for r in trace.steps:
            ind = r.indicators
            rows.append([
                name, r.step, r.lam - r.h, r.h_trial, r.h,
                None if ind is None else ind.delta,
                None if ind is None else ind.kappa,
                None if ind is None else ind.alpha,
            ])
        results.append(RunResult(spec.label, status, trace.corrections, trace.total_iterations, trace.corrector_time, message))
        print(f"{name:<11} {status:<7} corrections={trace.corrections}")
    write_csv(outdir / "indicators.csv", ["preset", "step", "lambda", "h_trial", "h", "delta", "kappa", "alpha"], rows)
    write_csv(outdir / "summary.csv", SUMMARY_COLUMNS, summary_rows(results, cfg.timing))
    write_manifest(outdir, cfg, "indicators", results)
    return EXIT_TRAVERSAL if any(r.status != "ok" for r in results) else EXIT_OK


def _sweep_point(cfg: ExperimentConfig, spec: MethodSpec, outdir: str) -> RunResult:
    return run_method(build_problem(cfg), cfg, spec, Path(outdir))


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


def cmd_sweep(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    specs = [MethodSpec("direct", "direct")] if cfg.sweep.include_direct else []
    for n in cfg.sweep.n_steps:
        specs.append(MethodSpec(f"{cfg.sweep.prediction}-N{n}", "rnc", {"prediction": cfg.sweep.prediction, "n_steps": int(n), "adaptive": False}))
    for spec in specs:
        continuation_config(cfg, spec.overrides)
    workers = worker_count()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, [cfg] * len(specs), specs, [str(outdir)] * len(specs)))
    else:
        problem = build_problem(cfg)
        results = [run_method(problem, cfg, spec, outdir) for spec in specs]
    ok = [r for r in results if r.status == "ok" and r.label != "direct"]
    key = (lambda r: r.time_s) if cfg.timing else (lambda r: r.iterations)
    best = min(ok, key=key).label if ok else None
    rows = [[r.label, r.status, r.corrections, r.iterations, r.time_s if cfg.timing else None, r.label == best] for r in results]
    write_csv(outdir / "summary.csv", SUMMARY_COLUMNS + ["best"], rows)
    write_manifest(outdir, cfg, "sweep", results)
    for r in results:
        print(f"{r.label:<20} {r.status:<7} corrections={r.corrections:<4} iterations={r.iterations}{'  <- best' if r.label == best else ''}")
    return EXIT_TRAVERSAL if any(r.status != "ok" for r in results) else EXIT_OK


COMMANDS = {"run": cmd_run, "orders": cmd_orders, "indicators": cmd_indicators, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riemcont", description="Riemannian continuation experiments")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="instance seed (overrides config)")
    parser.add_argument("--preset", help="step-size preset: permissive, moderate, strict or 1-3")
    parser.add_argument("--strict-abort", action="store_true", help="abort on the first failed correction")
    parser.add_argument("--timing", action="store_true", help="record wall times (makes outputs non-deterministic)")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_cli_overrides(load_config(args.config), args)
        tic = time.perf_counter()
        code = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - tic)
    return code


if __name__ == "__main__":
    sys.exit(main())
