"""Dielectric cylinder: interior field against the analytic value over a range of contrasts."""

import argparse

import numpy as np

from stagmls.geometry import PointKind
from stagmls.problems import dielectric_coefficients, dielectric_cylinder_problem, error_l2, solve_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--contrasts", type=float, nargs="+", default=[2, 10, 100, 1000])
    ap.add_argument("--mean", choices=("arithmetic", "harmonic"), default="arithmetic")
    args = ap.parse_args()
    print(f"{'contrast':>9s} {'dphi/dx':>10s} {'exact':>10s} {'rel err':>9s} {'l2 err':>9s} {'residual':>9s}")
    for c in args.contrasts:
        p = dielectric_cylinder_problem(c)
        s = solve_problem(p, args.m, N=args.N, mean=args.mean)
        r = np.hypot(s.cloud.positions[:, 0], s.cloud.positions[:, 1])
        inside = (r < 0.5) & (s.cloud.kind == PointKind.INTERIOR)
        mean = np.mean(s.gradient[inside, 0])
        A, _ = dielectric_coefficients(c)
        print(f"{c:9g} {mean:10.5f} {A:10.5f} {abs(mean - A) / A:9.2e} "
              f"{error_l2(s.cloud, s.phi, p.phi):9.2e} {s.report.residual:9.1e}", flush=True)


if __name__ == "__main__":
    main()
