"""Computational domains and meshless point clouds.

Clouds are built the same way for every domain: the boundary is sampled at a
spacing of about ``dx``, the interior is filled from a Cartesian lattice of
pitch ``dx``, lattice points outside the domain or closer than ``guard * dx``
to the boundary are deleted, and the survivors are jittered by a uniform
random displacement of at most ``eta`` per component.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class PointKind(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2


# Maps (position, outward normal) of a boundary point to "dirichlet" / "neumann".
BCAssignment = Callable[[np.ndarray, np.ndarray], str]


def all_dirichlet(x, n) -> str:
    return "dirichlet"


def all_neumann(x, n) -> str:
    return "neumann"


class Domain:
    """Base class: subclasses supply the signed distance and boundary samples."""

    dim: int

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boundary_samples(self, dx: float) -> tuple[np.ndarray, np.ndarray]:
        """Boundary positions and unit outward normals at spacing ``<= dx``."""
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def feature_size(self) -> float:
        raise NotImplementedError

    @property
    def reference_length(self) -> float:
        """Length ``L`` used to convert a resolution ``N`` into ``dx = L / N``."""
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))


def _circle(radius: float, dx: float, outward: float) -> tuple[np.ndarray, np.ndarray]:
    n = max(3, math.ceil(2.0 * math.pi * radius / dx))
    theta = 2.0 * math.pi * np.arange(n) / n
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    return radius * dirs, outward * dirs


@dataclass(frozen=True)
class UnitSquare(Domain):
    """``[x0, x0 + 1] x [y0, y0 + 1]``; ``offset`` is the lower-left corner."""

    offset: tuple[float, float] = (0.0, 0.0)
    dim: int = field(default=2, init=False)

    def signed_distance(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.asarray(self.offset)
        q = np.abs(x - (lo + 0.5)) - 0.5
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def boundary_samples(self, dx):
        n = math.ceil(1.0 / dx - 1e-9)
        t = np.arange(n) / n
        lo = np.asarray(self.offset)
        pts, nrm = [], []
        # counter-clockwise from the lower-left corner, one corner per edge
        for start, along, normal in (
            ((0.0, 0.0), (1.0, 0.0), (0.0, -1.0)),
            ((1.0, 0.0), (0.0, 1.0), (1.0, 0.0)),
            ((1.0, 1.0), (-1.0, 0.0), (0.0, 1.0)),
            ((0.0, 1.0), (0.0, -1.0), (-1.0, 0.0)),
        ):
            p = np.asarray(start) + t[:, None] * np.asarray(along)
            nn = np.tile(np.asarray(normal, dtype=float), (n, 1))
            corner_normal = np.asarray(normal) - np.asarray(along)
            nn[0] = corner_normal / np.linalg.norm(corner_normal)
            pts.append(p)
            nrm.append(nn)
        return lo + np.vstack(pts), np.vstack(nrm)

    def bounding_box(self):
        lo = np.asarray(self.offset, dtype=float)
        return lo, lo + 1.0

    @property
    def feature_size(self):
        return 1.0

    @property
    def reference_length(self):
        return 1.0


@dataclass(frozen=True)
class Annulus(Domain):
    """Annulus centred at the origin."""

    r_inner: float = math.pi / 4
    r_outer: float = math.pi / 2
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("need 0 < r_inner < r_outer")

    def signed_distance(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x[:, :2], axis=1)
        return np.maximum(r - self.r_outer, self.r_inner - r)

    def boundary_samples(self, dx):
        po, no = _circle(self.r_outer, dx, 1.0)
        pi, ni = _circle(self.r_inner, dx, -1.0)
        return np.vstack([po, pi]), np.vstack([no, ni])

    def bounding_box(self):
        return np.full(2, -self.r_outer), np.full(2, self.r_outer)

    @property
    def feature_size(self):
        return self.r_outer - self.r_inner

    @property
    def reference_length(self):
        return 2.0 * self.r_outer


@dataclass(frozen=True)
class ExtrudedAnnulus(Domain):
    """Annulus extruded along z over ``[0, height]`` (a thick-walled cylinder)."""

    r_inner: float = math.pi / 4
    r_outer: float = math.pi / 2
    height: float = math.pi
    dim: int = field(default=3, init=False)

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer or self.height <= 0:
            raise ValueError("need 0 < r_inner < r_outer and height > 0")

    def signed_distance(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x[:, :2], axis=1)
        d_rad = np.maximum(r - self.r_outer, self.r_inner - r)
        d_ax = np.maximum(-x[:, 2], x[:, 2] - self.height)
        outside = np.hypot(np.maximum(d_rad, 0.0), np.maximum(d_ax, 0.0))
        return outside + np.minimum(np.maximum(d_rad, d_ax), 0.0)

    def boundary_samples(self, dx):
        nz = math.ceil(self.height / dx - 1e-9)
        zs = self.height * np.arange(nz + 1) / nz
        pts, nrm = [], []
        for radius, outward in ((self.r_outer, 1.0), (self.r_inner, -1.0)):
            ring, ring_n = _circle(radius, dx, outward)
            for k, z in enumerate(zs):
                p = np.column_stack([ring, np.full(len(ring), z)])
                n = np.column_stack([ring_n, np.zeros(len(ring))])
                if k == 0 or k == nz:
                    # rim: bisect the lateral and cap normals
                    n[:, 2] = -1.0 if k == 0 else 1.0
                    n /= np.linalg.norm(n, axis=1, keepdims=True)
                pts.append(p)
                nrm.append(n)
        # caps: lattice points of the annular disk away from the rims
        ij = np.arange(math.floor(-self.r_outer / dx), math.ceil(self.r_outer / dx) + 1) * dx
        gx, gy = np.meshgrid(ij, ij, indexing="ij")
        disk = np.column_stack([gx.ravel(), gy.ravel()])
        r = np.linalg.norm(disk, axis=1)
        disk = disk[(r < self.r_outer - 0.5 * dx) & (r > self.r_inner + 0.5 * dx)]
        for z, nzv in ((0.0, -1.0), (self.height, 1.0)):
            pts.append(np.column_stack([disk, np.full(len(disk), z)]))
            nrm.append(np.tile([0.0, 0.0, nzv], (len(disk), 1)))
        return np.vstack(pts), np.vstack(nrm)

    def bounding_box(self):
        return (np.array([-self.r_outer, -self.r_outer, 0.0]),
                np.array([self.r_outer, self.r_outer, self.height]))

    @property
    def feature_size(self):
        return min(self.r_outer - self.r_inner, self.height)

    @property
    def reference_length(self):
        return 2.0 * self.r_outer


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable point set with boundary classification.

    ``normals`` holds unit outward normals on boundary rows and NaN on interior
    rows.  ``h`` is the nominal lattice spacing the cloud was generated with.
    """

    positions: np.ndarray
    kind: np.ndarray
    normals: np.ndarray
    h: float
    seed: int | None = None

    def __post_init__(self):
        for name in ("positions", "kind", "normals"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.positions.ndim != 2 or self.normals.shape != self.positions.shape:
            raise ValueError("positions and normals must both have shape (N, d)")
        if self.kind.shape != (len(self.positions),):
            raise ValueError("kind must have one entry per point")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def boundary(self) -> np.ndarray:
        return self.kind != PointKind.INTERIOR

    @property
    def dirichlet(self) -> np.ndarray:
        return self.kind == PointKind.DIRICHLET

    @property
    def neumann(self) -> np.ndarray:
        return self.kind == PointKind.NEUMANN

    def with_kinds(self, kind: np.ndarray) -> "PointCloud":
        return PointCloud(self.positions, np.asarray(kind, dtype=np.int8), self.normals, self.h, self.seed)


def _lattice(lo: np.ndarray, hi: np.ndarray, dx: float, anchor: np.ndarray) -> np.ndarray:
    axes = []
    for a, b, c in zip(lo, hi, anchor):
        axes.append(c + dx * np.arange(math.floor((a - c) / dx), math.ceil((b - c) / dx) + 1))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def discretize(
    domain: Domain,
    dx: float,
    eta: float = 0.0,
    seed: int = 0,
    bc_assignment: BCAssignment | None = None,
    guard: float = 0.5,
) -> PointCloud:
    """Sample ``domain`` with boundary spacing ``dx`` and a jittered interior lattice.

    ``guard`` is the fraction of ``dx`` below which lattice points are
    considered too close to the boundary and deleted (0 keeps every lattice
    point strictly inside).  Deletion uses the unjittered lattice, so with
    ``eta * sqrt(d) < guard * dx`` every jittered point stays inside.
    """
    if dx <= 0:
        raise ValueError("dx must be positive")
    if not 0 <= eta < dx / 2:
        raise ValueError("eta must satisfy 0 <= eta < dx/2")
    if dx > domain.feature_size / 2:
        raise ValueError("resolution too coarse")
    bc_assignment = bc_assignment or all_dirichlet

    bpos, bnrm = domain.boundary_samples(dx)
    lo, hi = domain.bounding_box()
    anchor = lo if isinstance(domain, UnitSquare) else np.zeros(domain.dim)
    lattice = _lattice(lo, hi, dx, anchor)
    sd = domain.signed_distance(lattice)
    tol = 1e-12 * domain.diameter
    interior = lattice[sd < -(guard * dx) - tol] if guard > 0 else lattice[sd < -tol]
    if len(interior) == 0:
        raise ValueError("empty interior: dx too large for this domain")

    rng = np.random.Generator(np.random.Philox(seed))
    if eta > 0:
        interior = interior + rng.uniform(-eta, eta, size=interior.shape)

    kinds = []
    for x, n in zip(bpos, bnrm):
        label = bc_assignment(x, n)
        if label not in ("dirichlet", "neumann"):
            raise ValueError(f"boundary condition must be 'dirichlet' or 'neumann', got {label!r}")
        kinds.append(PointKind.DIRICHLET if label == "dirichlet" else PointKind.NEUMANN)

    positions = np.vstack([bpos, interior])
    kind = np.concatenate([np.array(kinds, dtype=np.int8),
                           np.full(len(interior), PointKind.INTERIOR, dtype=np.int8)])
    normals = np.vstack([bnrm, np.full(interior.shape, np.nan)])
    return PointCloud(positions, kind, normals, float(dx), seed)


def characteristic_spacing(cloud: PointCloud) -> float:
    """Nominal spacing ``h`` the cloud was generated with."""
    return cloud.h


def measured_spacing(cloud: PointCloud) -> float:
    """Largest nearest-neighbour distance over the cloud (a fill-distance proxy)."""
    if len(cloud) < 2:
        raise ValueError("need >= 2 points")
    from .neighbors import build_index

    pts = cloud.positions
    index = build_index(pts, 2.0 * cloud.h)
    radius = 2.0 * cloud.h
    while True:
        nn = index.nearest_distances(radius)
        if np.all(np.isfinite(nn)):
            return float(nn.max())
        radius *= 2.0
        index = build_index(pts, radius)
