"""Command-line front end.

Commands::

    stagmls solve        --problem five-strip --N 64 --out runs/strip
    stagmls convergence  --problem sine2d --m 4 --resolutions 16 32 64 128
    stagmls probe        --problem five-strip --N 64 --axis x --at 0.5
    stagmls generate     --problem sine2d --N 32 --out runs/annulus

Settings come from an optional JSON file (``--config``) and are overridden by
flags.  Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .geometry import PointKind, all_dirichlet, all_neumann, discretize
from .gmls import StencilError, build_stencils
from .neighbors import write_stencil_sizes
from .problems import (
    ManufacturedProblem,
    ResolutionError,
    checkerboard_image,
    dielectric_cylinder_problem,
    five_strip_problem,
    raster_coefficient,
    raster_problem,
    run_convergence,
    sine_problem,
    solve_problem,
    spacing_for,
)
from .system import SolverError, export_matrix_market

log = logging.getLogger("stagmls")

PROBLEMS = ("sine2d", "sine3d", "five-strip", "dielectric", "raster")
ALLOWED_M = (2, 4, 6)


class ConfigError(ValueError):
    """Invalid configuration; reported with exit code 2."""


@dataclass
class RunConfig:
    problem: str | None = None
    N: int | None = None
    dx: float | None = None
    resolutions: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    eta: float = 0.1  # jitter amplitude as a fraction of dx
    m: int = 2
    multiplier: float | None = None
    bc: str = "dirichlet"
    scheme: str = "staggered"
    solver: str = "direct"
    tol: float = 1e-10
    max_iter: int = 5000
    preconditioner: str = "jacobi"
    null_space: str = "mean-zero"
    mean: str = "arithmetic"
    seed: int = 0
    contrast: float = 2.0
    image: str | None = None
    mapping: list = field(default_factory=lambda: [[[0, 127], 1.0], [[128, 255], 100.0]])
    out: str = "stagmls_out"
    axis: str = "x"
    at: float = 0.5
    component: int = 0
    allow_any_m: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**data)

    def validate(self, need_problem: bool = True) -> "RunConfig":
        if need_problem and self.problem is None:
            raise ConfigError("problem: missing problem id")
        if self.problem is not None and self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown id {self.problem!r} (choose from {', '.join(PROBLEMS)})")
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigError("m must be a positive integer")
        if self.m not in ALLOWED_M and not self.allow_any_m:
            raise ConfigError("m must be one of 2,4,6")
        choices = {
            "bc": ("dirichlet", "neumann"),
            "scheme": ("staggered", "collocated"),
            "solver": ("direct", "gmres", "bicgstab"),
            "preconditioner": ("jacobi", "ilu", "none"),
            "null_space": ("pin", "mean-zero"),
            "mean": ("arithmetic", "harmonic"),
            "axis": ("x", "y", "z"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name}: must be one of {', '.join(allowed)}")
        for name in ("dx", "tol", "multiplier", "contrast"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name}: must be positive")
        if self.N is not None and self.N < 1:
            raise ConfigError("N: must be a positive integer")
        if not 0 <= self.eta < 0.5:
            raise ConfigError("eta: must lie in [0, 0.5)")
        return self

    def problem_instance(self) -> ManufacturedProblem:
        bc = all_neumann if self.bc == "neumann" else all_dirichlet
        if self.problem == "sine2d":
            return sine_problem(2, bc=bc)
        if self.problem == "sine3d":
            return sine_problem(3, bc=bc)
        if self.problem == "five-strip":
            return five_strip_problem()
        if self.problem == "dielectric":
            return dielectric_cylinder_problem(self.contrast)
        image = checkerboard_image() if self.image is None else self.image
        mapping = [((int(lo), int(hi)), float(v)) for (lo, hi), v in self.mapping]
        return raster_problem(raster_coefficient(image, mapping))

    def solve_kwargs(self) -> dict:
        return dict(scheme=self.scheme, eta_factor=self.eta, seed=self.seed, multiplier=self.multiplier,
                    solver=self.solver, tol=self.tol, max_iter=self.max_iter,
                    preconditioner=self.preconditioner, null_space=self.null_space, mean=self.mean)

    def spacing(self, problem: ManufacturedProblem) -> float:
        if self.dx is not None:
            return self.dx
        return spacing_for(problem.domain, self.N if self.N is not None else 32)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of settings; flags override it")
    common.add_argument("--problem", choices=PROBLEMS)
    common.add_argument("--N", type=int, help="lattice points across the domain extent")
    common.add_argument("--dx", type=float, help="lattice spacing (overrides N)")
    common.add_argument("--eta", type=float, help="jitter amplitude as a fraction of dx")
    common.add_argument("--m", type=int, help="polynomial degree")
    common.add_argument("--multiplier", type=float, help="support radius in units of dx")
    common.add_argument("--bc", choices=("dirichlet", "neumann"))
    common.add_argument("--scheme", choices=("staggered", "collocated"))
    common.add_argument("--solver", choices=("direct", "gmres", "bicgstab"))
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--preconditioner", choices=("jacobi", "ilu", "none"))
    common.add_argument("--null-space", dest="null_space", choices=("pin", "mean-zero"))
    common.add_argument("--mean", choices=("arithmetic", "harmonic"), help="edge mobility average")
    common.add_argument("--seed", type=int)
    common.add_argument("--contrast", type=float, help="inclusion/background permittivity ratio")
    common.add_argument("--image", help="PGM raster for the raster problem")
    common.add_argument("--out", help="output path prefix")
    common.add_argument("--allow-any-m", dest="allow_any_m", action="store_true", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="stagmls", description="Staggered GMLS diffusion solver.")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="solve one problem and write fields")
    s.add_argument("--matrix", type=Path, help="also write the system in MatrixMarket format")
    s.add_argument("--stencils", type=Path, help="also write a per-edge stencil dump")
    c = sub.add_parser("convergence", parents=[common], help="refinement study with fitted rates")
    c.add_argument("--resolutions", type=int, nargs="+")
    c.add_argument("--compare-collocated", action="store_true",
                   help="repeat the study with the collocated scheme")
    p = sub.add_parser("probe", parents=[common], help="sample a field along an axis-aligned line")
    p.add_argument("--axis", choices=("x", "y", "z"), help="the probed line is {axis} = AT")
    p.add_argument("--at", type=float)
    p.add_argument("--component", type=int, help="flux component to report")
    g = sub.add_parser("generate", parents=[common], help="write the point cloud only")
    g.add_argument("--stencil-sizes", action="store_true", help="also write per-point stencil sizes")
    return ap


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
    cfg = RunConfig.from_dict(data)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    return cfg.validate()


def cmd_solve(cfg: RunConfig, args) -> int:
    problem = cfg.problem_instance()
    t0 = time.perf_counter()
    sol = solve_problem(problem, cfg.m, dx=cfg.spacing(problem), **cfg.solve_kwargs())
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_solution_csv(out.with_suffix(".csv"), sol.cloud, sol.phi, sol.flux)
    io.write_vtk(out.with_suffix(".vtk"), sol.cloud, {"phi": sol.phi, "mu": sol.mu}, {"flux": sol.flux},
                 title=f"{problem.name} m={cfg.m} {cfg.scheme}")
    if args.matrix is not None:
        from .system import assemble
        system = assemble(sol.cloud, sol.stencils, f=problem.f, u=problem.phi, g=problem.neumann_data,
                          mu=sol.mu, mean=cfg.mean)
        export_matrix_market(system, args.matrix)
    if args.stencils is not None:
        io.write_stencil_dump(args.stencils, sol.stencils)
    print(f"{problem.name}: {len(sol.cloud)} points, {len(sol.stencils.indices)} edges")
    print(f"solver {sol.report.solver}: residual {sol.report.residual:.3e}, "
          f"solve {sol.report.wall_time:.2f}s, total {elapsed:.2f}s")
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.vtk')}")
    return 0


def cmd_convergence(cfg: RunConfig, args) -> int:
    if args.resolutions is not None:
        cfg.resolutions = args.resolutions
    if len(cfg.resolutions) < 3:
        raise ConfigError("need ≥ 3 resolutions")
    problem = cfg.problem_instance()
    schemes = [cfg.scheme]
    if args.compare_collocated and "collocated" not in schemes:
        schemes.append("collocated")
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for scheme in schemes:
        kwargs = cfg.solve_kwargs()
        kwargs["scheme"] = scheme
        report = run_convergence(problem, cfg.m, cfg.resolutions, **kwargs)
        path = out.with_name(f"{out.name}_{scheme}.csv")
        report.write_csv(path)
        print(f"{report.label}")
        for N, e2, e1 in zip(report.N, report.e_l2, report.e_h1):
            print(f"  N={N:5d}  l2={e2:.4e}  h1={e1:.4e}")
        print(f"  fitted rates: l2 {report.rate_l2:.3f}  h1 {report.rate_h1:.3f}  -> {path}")
    return 0


def cmd_probe(cfg: RunConfig, args) -> int:
    for name in ("axis", "at", "component"):
        v = getattr(args, name)
        if v is not None:
            setattr(cfg, name, v)
    problem = cfg.problem_instance()
    axis = "xyz".index(cfg.axis)
    if axis >= problem.domain.dim or not 0 <= cfg.component < problem.domain.dim:
        raise ConfigError(f"axis/component: out of range for a {problem.domain.dim}-d problem")
    sol = solve_problem(problem, cfg.m, dx=cfg.spacing(problem), **cfg.solve_kwargs())
    idx, vals = io.line_probe(sol.cloud, sol.flux[:, cfg.component], axis, cfg.at)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    path = out.with_name(f"{out.name}_probe_{cfg.axis}{cfg.at:g}.csv")
    io.write_probe_csv(path, sol.cloud, idx, vals, f"u{'xyz'[cfg.component]}")
    print(f"{len(idx)} points within dx/2 of {cfg.axis} = {cfg.at:g}; "
          f"u{'xyz'[cfg.component]} in [{vals.min():.6g}, {vals.max():.6g}] -> {path}")
    return 0


def cmd_generate(cfg: RunConfig, args) -> int:
    problem = cfg.problem_instance()
    dx = cfg.spacing(problem)
    cloud = discretize(problem.domain, dx, cfg.eta * dx, cfg.seed, problem.bc)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_cloud_csv(out.with_suffix(".csv"), cloud)
    counts = {k.name.lower(): int(np.sum(cloud.kind == k)) for k in PointKind}
    print(f"{len(cloud)} points {counts} -> {out.with_suffix('.csv')}")
    if args.stencil_sizes:
        st = build_stencils(cloud, cfg.m, cfg.scheme, multiplier=cfg.multiplier)
        path = out.with_name(f"{out.name}_stencils.csv")
        write_stencil_sizes(path, st.indptr, st.eps)
        print(f"stencil sizes -> {path}")
    return 0


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "probe": cmd_probe, "generate": cmd_generate}


def main(argv: list[str] | None = None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        ap.print_usage(sys.stderr)
        print(f"stagmls: error: {exc}", file=sys.stderr)
        return 2
    except TypeError as exc:
        print(f"stagmls: error: config: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"stagmls: error: {exc}", file=sys.stderr)
        return 2
    except (StencilError, SolverError, ResolutionError, ValueError, OSError) as exc:
        print(f"stagmls: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
