"""Direct vs continuation tables for the Karcher and completion experiments.

    python scripts/tables.py karcher --seeds 0 1 2
    python scripts/tables.py completion --size 150 --rank 10
"""

import argparse
import time

from riemcont.completion import CompletionProblem, build_instance
from riemcont.continuation import PRESETS, ContinuationConfig, direct, rnc
from riemcont.errors import TraversalFailed
from riemcont.karcher import KarcherProblem, gen_pathological_instance
from riemcont.solvers import SolverConfig


def methods(n_fixed):
    rows = [("Direct", "direct", {})]
    for n in n_fixed:
        rows.append((f"Classical N={n}", "rnc", {"prediction": "classical", "n_steps": n}))
        rows.append((f"Tangential N={n}", "rnc", {"prediction": "tangential", "n_steps": n}))
    for name in ("permissive", "moderate", "strict"):
        rows.append((f"Adaptive {name}", "rnc", {"adaptive": True, "hyper": PRESETS[name]}))
    return rows


def table(problem, base, n_fixed):
    print(f"{'method':<22}{'corrections':>12}{'iterations':>12}{'time (s)':>10}")
    for label, kind, kw in methods(n_fixed):
        cfg = ContinuationConfig(**base, **kw)
        tic = time.perf_counter()
        try:
            sol = direct(problem, problem.start_point(), cfg) if kind == "direct" else rnc(problem, problem.start_point(), cfg)
            tr = sol.trace
            print(f"{label:<22}{tr.corrections:>12}{tr.total_iterations:>12}{time.perf_counter() - tic:>10.2f}")
        except TraversalFailed as exc:
            print(f"{label:<22}  failed: {exc}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem", choices=["karcher", "completion"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--size", type=int, default=300)
    ap.add_argument("--rank", type=int, default=15)
    args = ap.parse_args()
    for seed in args.seeds:
        print(f"\n== {args.problem}, seed {seed}")
        if args.problem == "karcher":
            p = KarcherProblem(gen_pathological_instance(n=10, K=75, seed=seed))
            table(p, {"solver": SolverConfig(tol=1e-6)}, [2])
        else:
            p = CompletionProblem(build_instance(args.size, args.size, args.rank, 3.0, 0.1, seed))
            table(p, {"corrector": "trust-region", "solver": SolverConfig(tol=1e-7)}, [3, 5])


if __name__ == "__main__":
    main()
