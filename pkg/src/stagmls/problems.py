"""Problem definitions, error norms and convergence studies."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    Annulus, BCAssignment, Domain, ExtrudedAnnulus, PointCloud, PointKind, UnitSquare,
    all_dirichlet, all_neumann, discretize,
)
from .gmls import StencilSet, build_stencils
from .neighbors import WeightKernel
from .system import MeanZero, PinPoint, SolveReport, assemble, fix_null_space, reconstruct_flux, solve

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------


class CoefficientField:
    """Scalar, strictly positive diffusivity ``mu(x)``."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def bounds(self) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(CoefficientField):
    value: float = 1.0

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("mu must be positive")

    def __call__(self, x):
        return np.full(len(np.atleast_2d(x)), float(self.value))

    @property
    def bounds(self):
        return self.value, self.value


@dataclass(frozen=True)
class PiecewiseStrips(CoefficientField):
    """Horizontal strips: ``values[k]`` on ``breaks[k-1] <= y < breaks[k]``."""

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.breaks) + 1:
            raise ValueError("need one more value than breaks")
        if min(self.values) <= 0:
            raise ValueError("mu must be positive")

    def strip(self, y) -> np.ndarray:
        return np.searchsorted(np.asarray(self.breaks), np.asarray(y), side="right")

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.asarray(self.values, dtype=float)[self.strip(x[:, 1])]

    @property
    def bounds(self):
        return min(self.values), max(self.values)


@dataclass(frozen=True)
class RadialTwoPhase(CoefficientField):
    """``mu_in`` for ``|x - center| < radius``, ``mu_out`` elsewhere (planar distance)."""

    radius: float
    mu_in: float
    mu_out: float
    center: tuple[float, float] = (0.0, 0.0)

    def __call__(self, x):
        x = np.atleast_2d(x)
        r = np.linalg.norm(x[:, :2] - np.asarray(self.center), axis=1)
        return np.where(r < self.radius, float(self.mu_in), float(self.mu_out))

    @property
    def bounds(self):
        return min(self.mu_in, self.mu_out), max(self.mu_in, self.mu_out)


@dataclass(frozen=True, eq=False)
class Raster(CoefficientField):
    """Nearest-pixel lookup of an 8-bit image mapped affinely onto a box.

    Image row 0 is the top of the box.  Queries outside the box are clamped to
    the nearest edge pixel.
    """

    image: np.ndarray
    levels: np.ndarray  # mu value for each gray level 0..255
    lower: tuple[float, float] = (0.0, 0.0)
    upper: tuple[float, float] = (1.0, 1.0)

    def pixel(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(x)
        h, w = self.image.shape
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        u = (x[:, 0] - lo[0]) / (hi[0] - lo[0])
        v = (hi[1] - x[:, 1]) / (hi[1] - lo[1])
        col = np.clip(np.floor(u * w).astype(int), 0, w - 1)
        row = np.clip(np.floor(v * h).astype(int), 0, h - 1)
        return row, col

    def __call__(self, x):
        row, col = self.pixel(x)
        return self.levels[self.image[row, col]]

    @property
    def bounds(self):
        used = self.levels[np.unique(self.image)]
        return float(used.min()), float(used.max())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit PGM (``P2`` ASCII or ``P5`` binary) as a ``(rows, cols)`` uint8 array."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    # header: magic, width, height, maxval; '#' starts a comment
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"unsupported image format {magic!r}: only P2/P5 PGM is read")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval <= 255:
        raise ValueError("only 8-bit PGM images (maxval <= 255) are supported")
    if magic == b"P5":
        if len(data) - (pos + 1) < width * height:
            raise ValueError("PGM pixel data is truncated")
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos + 1)
    else:
        raw = np.array(data[pos:].split()[: width * height], dtype=np.int64)
        if raw.max(initial=0) > maxval:
            raise ValueError("pixel value exceeds maxval")
        raw = raw.astype(np.uint8)
    if raw.size != width * height:
        raise ValueError("PGM pixel data is truncated")
    return raw.reshape(height, width).copy()


def write_pgm(path, image: np.ndarray, binary: bool = True) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n255\n".encode()
    if binary:
        Path(path).write_bytes(header + image.tobytes())
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in r) for r in image)
        Path(path).write_bytes(header + rows.encode() + b"\n")


def gray_levels(mapping: Sequence[tuple[tuple[int, int], float]]) -> np.ndarray:
    """Expand ``[((lo, hi), mu), ...]`` (inclusive ranges) into a 256-entry table."""
    levels = np.full(256, np.nan)
    for (lo, hi), value in mapping:
        if value <= 0:
            raise ValueError("mu must be positive")
        if not 0 <= lo <= hi <= 255:
            raise ValueError(f"bad gray range [{lo}, {hi}]")
        levels[lo:hi + 1] = np.where(np.isnan(levels[lo:hi + 1]), value, levels[lo:hi + 1])
    if np.isnan(levels).any():
        missing = int(np.flatnonzero(np.isnan(levels))[0])
        raise ValueError(f"gap in gray-level mapping: level {missing} is not covered")
    return levels


def raster_coefficient(path_or_image, mapping, lower=(0.0, 0.0), upper=(1.0, 1.0)) -> Raster:
    image = path_or_image if isinstance(path_or_image, np.ndarray) else read_pgm(path_or_image)
    return Raster(np.asarray(image, dtype=np.uint8), gray_levels(mapping), tuple(lower), tuple(upper))


def checkerboard_image(cells: int = 4, pixels: int = 16) -> np.ndarray:
    ij = np.indices((cells * pixels, cells * pixels)) // pixels
    return np.where((ij[0] + ij[1]) % 2 == 0, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManufacturedProblem:
    """``-div(mu grad phi) = f`` with exact solution ``phi`` on ``domain``."""

    name: str
    domain: Domain
    phi: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    mu: CoefficientField = field(default_factory=Constant)
    bc: BCAssignment = all_dirichlet

    def neumann_data(self, x, n) -> np.ndarray:
        """Outward flux datum ``g = n . mu grad phi``."""
        return np.einsum("kd,kd->k", np.atleast_2d(n), self.grad(x)) * self.mu(x)

    def flux(self, x) -> np.ndarray:
        return -self.mu(x)[:, None] * self.grad(x)

    def with_bc(self, bc: BCAssignment) -> "ManufacturedProblem":
        return ManufacturedProblem(self.name, self.domain, self.phi, self.grad, self.f, self.mu, bc)

    def with_mu(self, mu: CoefficientField) -> "ManufacturedProblem":
        return ManufacturedProblem(self.name, self.domain, self.phi, self.grad, self.f, mu, self.bc)


def sine_problem(dim: int = 2, domain: Domain | None = None, bc: BCAssignment = all_dirichlet) -> ManufacturedProblem:
    """``phi = prod_k sin x_k`` with ``mu = 1`` on the annulus (2D) or its extrusion (3D)."""
    if domain is None:
        domain = Annulus() if dim == 2 else ExtrudedAnnulus()

    def phi(x):
        return np.prod(np.sin(np.atleast_2d(x)), axis=1)

    def grad(x):
        x = np.atleast_2d(x)
        s, c = np.sin(x), np.cos(x)
        out = np.empty_like(x)
        for k in range(x.shape[1]):
            out[:, k] = c[:, k] * np.prod(np.delete(s, k, axis=1), axis=1)
        return out

    def f(x):
        return dim * phi(x)

    return ManufacturedProblem(f"sine{dim}d", domain, phi, grad, f, Constant(1.0), bc)


FIVE_STRIP_MU = (16.0, 6.0, 1.0, 10.0, 2.0)


def five_strip_problem() -> ManufacturedProblem:
    """``phi = 1 - x`` on the unit square with five horizontal strips of constant mu.

    All boundaries are Neumann; the exact flux in strip ``k`` is ``(mu_k, 0)``.
    """
    mu = PiecewiseStrips((0.2, 0.4, 0.6, 0.8), FIVE_STRIP_MU)

    def phi(x):
        return 1.0 - np.atleast_2d(x)[:, 0]

    def grad(x):
        x = np.atleast_2d(x)
        return np.column_stack([-np.ones(len(x)), np.zeros(len(x))])

    def f(x):
        return np.zeros(len(np.atleast_2d(x)))

    return ManufacturedProblem("five-strip", UnitSquare(), phi, grad, f, mu, all_neumann)


def dielectric_coefficients(contrast: float) -> tuple[float, float]:
    """Interior field factor ``A`` and dipole strength ``B`` for ``mu_in / mu_out = contrast``.

    Inside ``phi = A x``; outside ``phi = x + B R^2 x / r^2``.  Continuity of
    ``phi`` and of ``mu d_r phi`` at ``r = R`` give ``A = 1 + B`` and
    ``contrast * A = 1 - B``.
    """
    return 2.0 / (1.0 + contrast), (1.0 - contrast) / (1.0 + contrast)


def dielectric_cylinder_problem(contrast: float = 2.0, radius: float = 0.5) -> ManufacturedProblem:
    """Cylinder of permittivity ``contrast`` in a unit background under a unit field along x.

    The domain is the unit square centred on the cylinder; the exact
    infinite-domain potential supplies Dirichlet data on its boundary.
    """
    A, B = dielectric_coefficients(contrast)
    R2 = radius * radius

    def phi(x):
        x = np.atleast_2d(x)
        r2 = np.sum(x[:, :2] ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            outside = x[:, 0] * (1.0 + B * R2 / r2)
        return np.where(r2 < R2, A * x[:, 0], outside)

    def grad(x):
        x = np.atleast_2d(x)
        r2 = np.sum(x[:, :2] ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = 1.0 + B * R2 * (r2 - 2.0 * x[:, 0] ** 2) / r2**2
            gy = -2.0 * B * R2 * x[:, 0] * x[:, 1] / r2**2
        inside = r2 < R2
        return np.column_stack([np.where(inside, A, gx), np.where(inside, 0.0, gy)])

    def f(x):
        return np.zeros(len(np.atleast_2d(x)))

    mu = RadialTwoPhase(radius, contrast, 1.0)
    return ManufacturedProblem(f"dielectric-{contrast:g}", UnitSquare((-0.5, -0.5)), phi, grad, f, mu)


def raster_problem(mu: CoefficientField) -> ManufacturedProblem:
    """Unit square with Dirichlet data ``1 - x`` and a raster coefficient.

    ``phi``/``grad`` are the constant-coefficient solution; they supply the
    boundary data and are not the exact solution for a varying ``mu``.
    """
    base = five_strip_problem()
    return ManufacturedProblem("raster", UnitSquare(), base.phi, base.grad, base.f, mu, all_dirichlet)


# ---------------------------------------------------------------------------
# solving and error measurement
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Solution:
    problem: ManufacturedProblem
    cloud: PointCloud
    stencils: StencilSet
    phi: np.ndarray
    flux: np.ndarray
    report: SolveReport

    @property
    def mu(self) -> np.ndarray:
        return self.problem.mu(self.cloud.positions)

    @property
    def gradient(self) -> np.ndarray:
        return -self.flux / self.mu[:, None]


def spacing_for(domain: Domain, N: int) -> float:
    """Lattice spacing for resolution ``N``: ``dx = L / N`` with ``L`` the domain extent."""
    return domain.reference_length / N


def solve_problem(
    problem: ManufacturedProblem,
    m: int,
    N: int | None = None,
    dx: float | None = None,
    scheme: str = "staggered",
    eta_factor: float = 0.1,
    seed: int = 0,
    multiplier: float | None = None,
    kernel: WeightKernel | None = None,
    solver: str = "direct",
    tol: float = 1e-10,
    max_iter: int = 5000,
    preconditioner: str = "jacobi",
    null_space: str = "mean-zero",
    mean: str = "arithmetic",
    cloud: PointCloud | None = None,
    stencils: StencilSet | None = None,
) -> Solution:
    """Discretize, assemble, solve and reconstruct the flux for one resolution."""
    if cloud is None:
        if dx is None:
            if N is None:
                raise ValueError("give N or dx")
            dx = spacing_for(problem.domain, N)
        cloud = discretize(problem.domain, dx, eta_factor * dx, seed, problem.bc)
    if stencils is None:
        stencils = build_stencils(cloud, m, scheme, multiplier=multiplier, kernel=kernel)
    mu = problem.mu(cloud.positions)
    system = assemble(cloud, stencils, f=problem.f, u=problem.phi, g=problem.neumann_data, mu=mu, mean=mean)
    shift = None
    if not np.any(cloud.kind == PointKind.DIRICHLET):
        if null_space == "pin":
            pin = int(np.flatnonzero(cloud.kind == PointKind.NEUMANN)[0])
            system = fix_null_space(system, PinPoint(pin, float(problem.phi(cloud.positions[pin:pin + 1])[0])))
        elif null_space == "mean-zero":
            system = fix_null_space(system, MeanZero())
            shift = float(np.mean(problem.phi(cloud.positions)))
        else:
            raise ValueError(f"unknown null-space strategy {null_space!r}")
    x, report = solve(system, solver, tol=tol, max_iter=max_iter, preconditioner=preconditioner)
    phi = x[: len(cloud)]
    if shift is not None:
        # compare against the exact solution's mean
        phi = phi + shift
    flux = reconstruct_flux(cloud, stencils, phi, mu, g=problem.neumann_data, mean=mean)
    return Solution(problem, cloud, stencils, phi, flux, report)


def error_l2(cloud: PointCloud, solution: np.ndarray, exact) -> float:
    """Root-mean-square nodal error over all points."""
    ex = exact(cloud.positions) if callable(exact) else np.asarray(exact, dtype=float)
    return float(np.sqrt(np.mean((np.asarray(solution, dtype=float) - ex) ** 2)))


def error_h1(cloud: PointCloud, gradient: np.ndarray, exact_gradient, mask: np.ndarray | None = None) -> float:
    """Root-mean-square error of a reconstructed gradient, optionally over ``mask``."""
    ex = exact_gradient(cloud.positions) if callable(exact_gradient) else np.asarray(exact_gradient)
    sq = np.sum((np.asarray(gradient) - ex) ** 2, axis=1)
    if mask is not None:
        sq = sq[mask]
    return float(np.sqrt(np.mean(sq)))


def fit_rate(h: Sequence[float], e: Sequence[float]) -> float:
    """Least-squares slope of ``log e`` against ``log h``."""
    h, e = np.log(np.asarray(h, dtype=float)), np.log(np.asarray(e, dtype=float))
    return float(np.polyfit(h, e, 1)[0])


@dataclass
class ConvergenceReport:
    label: str
    N: list[int]
    h: list[float]
    e_l2: list[float]
    e_h1: list[float]
    points: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.N) < 3:
            raise ValueError("need ≥ 3 resolutions")

    @property
    def rate_l2(self) -> float:
        return fit_rate(self.h, self.e_l2)

    @property
    def rate_h1(self) -> float:
        return fit_rate(self.h, self.e_h1)

    def pair_rates(self, errors: Sequence[float]) -> list[float]:
        return [math.log(errors[k] / errors[k - 1]) / math.log(self.h[k] / self.h[k - 1])
                for k in range(1, len(errors))]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "h", "e_l2", "e_h1", "rate_l2", "rate_h1"])
            r2 = [""] + [f"{r:.17g}" for r in self.pair_rates(self.e_l2)]
            r1 = [""] + [f"{r:.17g}" for r in self.pair_rates(self.e_h1)]
            for k in range(len(self.N)):
                w.writerow([self.N[k], f"{self.h[k]:.17g}", f"{self.e_l2[k]:.17g}",
                            f"{self.e_h1[k]:.17g}", r2[k], r1[k]])
            w.writerow(["fit", "", "", "", f"{self.rate_l2:.17g}", f"{self.rate_h1:.17g}"])


class ResolutionError(RuntimeError):
    def __init__(self, N: int, cause: Exception):
        super().__init__(f"resolution N={N} failed: {cause}")
        self.N = N


def run_convergence(problem: ManufacturedProblem, m: int, resolutions: Sequence[int], **solve_kwargs) -> ConvergenceReport:
    """Solve at each resolution and record nodal and gradient RMS errors."""
    if len(resolutions) < 3:
        raise ValueError("need ≥ 3 resolutions")
    h, e2, e1, npts = [], [], [], []
    for N in resolutions:
        try:
            sol = solve_problem(problem, m, N=N, **solve_kwargs)
        except Exception as exc:
            raise ResolutionError(N, exc) from exc
        h.append(sol.cloud.h)
        e2.append(error_l2(sol.cloud, sol.phi, problem.phi))
        e1.append(error_h1(sol.cloud, sol.gradient, problem.grad, sol.cloud.kind == PointKind.INTERIOR))
        npts.append(len(sol.cloud))
        log.info("%s m=%d N=%d points=%d l2=%.3e h1=%.3e (%.2fs solve)",
                 problem.name, m, N, len(sol.cloud), e2[-1], e1[-1], sol.report.wall_time)
    scheme = solve_kwargs.get("scheme", "staggered")
    return ConvergenceReport(f"{problem.name} m={m} {scheme}", list(resolutions), h, e2, e1, npts)
