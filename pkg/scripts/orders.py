"""Prediction orders and indicator slopes on the easy Karcher instance at several lambda.

At lam = 0 the tangential prediction error and alpha are one order smaller
than at interior points: every data curve is a geodesic from the common
base point, so the curve of means has no second-order term there.
"""

import argparse

from riemcont.continuation import default_h_grid, estimate_prediction_order, indicator_scaling, on_curve_point
from riemcont.karcher import KarcherProblem, gen_easy_instance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lams", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    p = KarcherProblem(gen_easy_instance(n=10, K=75, seed=args.seed))
    hs = default_h_grid()
    print(f"{'lambda':>7}{'classical':>11}{'tangential':>12}{'delta':>8}{'kappa':>8}{'alpha':>8}")
    for lam in args.lams:
        x = on_curve_point(p, lam, p.start_point())
        c = estimate_prediction_order(p, x, lam, "classical", hs).slope
        t = estimate_prediction_order(p, x, lam, "tangential", hs).slope
        _, fits = indicator_scaling(p, x, lam, hs)
        s = [fits[k].slope for k in ("delta", "kappa", "alpha")]
        cells = "".join(f"{v:>8.3f}" if v is not None else f"{'n/a':>8}" for v in s)
        print(f"{lam:>7.2f}{c:>11.3f}{t:>12.3f}{cells}")


if __name__ == "__main__":
    main()
