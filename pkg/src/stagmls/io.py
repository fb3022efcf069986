"""Text export and import: point clouds, solution fields, stencils, line probes.

Every floating-point value is written with 17 significant digits so a CSV
read back with ``float`` reproduces the original doubles exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .geometry import PointCloud, PointKind
from .gmls import StencilSet

AXES = ("x", "y", "z")


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_cloud_csv(path, cloud: PointCloud) -> None:
    """Columns ``x, y[, z], kind, nx, ny[, nz]``; interior normals are ``nan``."""
    d = cloud.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*AXES[:d], "kind", *("n" + a for a in AXES[:d])])
        for x, k, n in zip(cloud.positions, cloud.kind, cloud.normals):
            w.writerow([*map(fmt, x), PointKind(k).name.lower(), *map(fmt, n)])


def read_cloud_csv(path, h: float, seed: int = 0) -> PointCloud:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = header.index("kind")
    if d not in (2, 3) or header[:d] != list(AXES[:d]):
        raise ValueError(f"unrecognised cloud header {header}")
    if not body:
        raise ValueError("cloud file has no points")
    pos = np.array([[float(v) for v in r[:d]] for r in body])
    kind = np.array([PointKind[r[d].upper()] for r in body], dtype=np.int8)
    nrm = np.array([[float(v) for v in r[d + 1:]] for r in body])
    return PointCloud(pos, kind, nrm, h, seed)


def write_solution_csv(path, cloud: PointCloud, phi: np.ndarray, flux: np.ndarray) -> None:
    """Columns ``x, y[, z], phi, ux, uy[, uz]`` with ``u = -mu grad phi``."""
    d = cloud.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*AXES[:d], "phi", *("u" + a for a in AXES[:d])])
        for x, p, u in zip(cloud.positions, phi, flux):
            w.writerow([*map(fmt, x), fmt(p), *map(fmt, u)])


def write_vtk(path, cloud: PointCloud, scalars: dict[str, np.ndarray], vectors: dict[str, np.ndarray],
              title: str = "stagmls field") -> None:
    """Legacy ASCII VTK ``POLYDATA`` with one vertex per point and ``POINT_DATA``."""
    n = len(cloud)
    pos = np.zeros((n, 3))
    pos[:, : cloud.dim] = cloud.positions
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA", f"POINTS {n} double"]
    lines += [" ".join(map(fmt, p)) for p in pos]
    lines.append(f"VERTICES {n} {2 * n}")
    lines += [f"1 {i}" for i in range(n)]
    lines.append(f"POINT_DATA {n}")
    lines += ["SCALARS kind int 1", "LOOKUP_TABLE default"]
    lines += [str(int(k)) for k in cloud.kind]
    for name, values in scalars.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [fmt(v) for v in values]
    for name, values in vectors.items():
        v3 = np.zeros((n, 3))
        v3[:, : cloud.dim] = values
        lines.append(f"VECTORS {name} double")
        lines += [" ".join(map(fmt, v)) for v in v3]
    Path(path).write_text("\n".join(lines) + "\n")


def write_stencil_dump(path, stencils: StencilSet) -> None:
    """One row per edge: ``i, j, beta_ij, gamma_i, condition``.

    ``beta`` is the operator coefficient before the edge mobility is applied;
    ``gamma`` is the Neumann data coefficient (zero away from Neumann points).
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "beta", "gamma", "condition"])
        for i, j, b in zip(stencils.rows, stencils.indices, stencils.lap):
            w.writerow([int(i), int(j), fmt(b), fmt(stencils.lap_g[i]), fmt(stencils.cond[i])])


def line_probe(cloud: PointCloud, values: np.ndarray, axis: int, coordinate: float,
               band: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Points within ``band`` (default ``h / 2``) of the line ``x_axis = coordinate``.

    Returns the point indices and the probed values, sorted by the first free
    coordinate.
    """
    x = np.asarray(cloud.positions)
    if not 0 <= axis < cloud.dim:
        raise ValueError(f"axis {axis} out of range for a {cloud.dim}-d cloud")
    band = 0.5 * cloud.h if band is None else band
    lo, hi = x[:, axis].min(), x[:, axis].max()
    if not lo - band <= coordinate <= hi + band:
        raise ValueError(f"probe line {AXES[axis]} = {coordinate} lies outside the cloud [{lo}, {hi}]")
    hit = np.flatnonzero(np.abs(x[:, axis] - coordinate) <= band)
    if len(hit) == 0:
        raise ValueError(f"no points within {band} of {AXES[axis]} = {coordinate}")
    free = [k for k in range(cloud.dim) if k != axis]
    order = np.lexsort(tuple(x[hit, k] for k in reversed(free)))
    hit = hit[order]
    return hit, np.asarray(values)[hit]


def write_probe_csv(path, cloud: PointCloud, index: np.ndarray, values: np.ndarray, label: str) -> None:
    d = cloud.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*AXES[:d], label])
        for i, v in zip(index, values):
            w.writerow([*map(fmt, cloud.positions[i]), fmt(v)])
