"""Cell-list neighbour search and local primal stencil data.

For a point ``x_i`` with support radius ``eps`` the stencil is every other
point with ``|x_j - x_i| < eps``.  Each edge carries its midpoint
``x_ij = (x_i + x_j) / 2``, its half-edge ``m_ij = x_ij - x_i`` and the weight
``Phi(|m_ij|)`` evaluated at the midpoint distance.  The midpoints fill the
ball of radius ``eps / 2``, so the kernel is given that support; a midpoint
then gets the same weight its endpoint would get in a point-value fit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .basis import basis_size

# Support-radius multipliers c(m, d) with eps = c * h.
EPSILON_MULTIPLIERS = {
    2: {2: 2.9, 4: 3.8, 6: 5.8},
    3: {2: 2.6, 4: 3.4, 6: 5.2},
}


class StencilDeficientError(ValueError):
    def __init__(self, index: int, count: int, required: int):
        super().__init__(f"stencil deficient at point {index}: {count} neighbours, need {required}")
        self.index = index
        self.count = count
        self.required = required


@dataclass(frozen=True)
class WeightKernel:
    """Compactly supported radial weight ``Phi(r)`` with support ``[0, eps)``.

    ``family`` is ``"wendland_c2"`` for ``(1 - s)^4 (4 s + 1)`` or
    ``"truncated_power"`` for ``(1 - s)^power``, with ``s = r / eps``.
    """

    family: str = "wendland_c2"
    power: int = 4

    def __post_init__(self):
        if self.family not in ("wendland_c2", "truncated_power"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "truncated_power" and self.power < 1:
            raise ValueError("truncated power kernel needs power >= 1")

    def __call__(self, r, eps):
        s = np.asarray(r, dtype=float) / eps
        t = np.clip(1.0 - s, 0.0, None)
        if self.family == "wendland_c2":
            return t**4 * (4.0 * s + 1.0)
        return t**self.power


def midpoint_weights(kernel: WeightKernel, half_lengths, eps):
    """``Phi(|m_ij|)`` with the kernel supported on the midpoint ball ``|m| < eps / 2``."""
    return kernel(half_lengths, 0.5 * np.asarray(eps))


class SpatialIndex:
    """Uniform-grid cell list over a fixed point set."""

    def __init__(self, positions: np.ndarray, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.positions = np.asarray(positions, dtype=float)
        self.cell_size = float(cell_size)
        self.dim = self.positions.shape[1]
        self.origin = self.positions.min(axis=0) if len(self.positions) else np.zeros(self.dim)
        cells = self._cells(self.positions)
        self.shape = cells.max(axis=0) + 1 if len(cells) else np.ones(self.dim, dtype=int)
        keys = self._keys(cells)
        self.order = np.argsort(keys, kind="stable")
        self.sorted_keys = keys[self.order]

    def _cells(self, x: np.ndarray) -> np.ndarray:
        return np.floor((x - self.origin) / self.cell_size).astype(np.int64)

    def _keys(self, cells: np.ndarray) -> np.ndarray:
        key = np.zeros(len(cells), dtype=np.int64)
        for k in range(self.dim):
            key = key * (int(self.shape[k]) + 2) + cells[:, k]
        return key

    def _valid(self, cells: np.ndarray) -> np.ndarray:
        return np.all((cells >= 0) & (cells < self.shape), axis=1)

    def _candidates(self, cells: np.ndarray, reach: int):
        """Yield ``(row, point)`` candidate pairs for each query cell row."""
        offsets = np.stack(np.meshgrid(*[np.arange(-reach, reach + 1)] * self.dim, indexing="ij"),
                           axis=-1).reshape(-1, self.dim)
        rows = np.arange(len(cells))
        for off in offsets:
            c = cells + off
            ok = self._valid(c)
            if not ok.any():
                continue
            keys = self._keys(c[ok])
            start = np.searchsorted(self.sorted_keys, keys, side="left")
            stop = np.searchsorted(self.sorted_keys, keys, side="right")
            counts = stop - start
            if counts.sum() == 0:
                continue
            r = np.repeat(rows[ok], counts)
            # positions within each [start, stop) block
            within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            yield r, self.order[np.repeat(start, counts) + within]

    def query(self, x, radius: float) -> np.ndarray:
        """Sorted indices ``j`` with ``|x_j - x| < radius``."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if radius <= 0:
            return np.empty(0, dtype=np.int64)
        reach = math.ceil(radius / self.cell_size)
        found = []
        for _, pts in self._candidates(self._cells(x), reach):
            d = np.linalg.norm(self.positions[pts] - x, axis=1)
            found.append(pts[d < radius])
        return np.sort(np.concatenate(found)) if found else np.empty(0, dtype=np.int64)

    def query_all(self, radius, centers: np.ndarray | None = None, chunk: int = 4096):
        """Neighbour lists of many centres as CSR ``(indptr, indices)``.

        ``radius`` may be a scalar or one value per centre.  When ``centers``
        is omitted the indexed points themselves are queried and each point is
        excluded from its own list.  Lists are sorted by index.
        """
        self_query = centers is None
        centers = self.positions if self_query else np.asarray(centers, dtype=float)
        radius = np.broadcast_to(np.asarray(radius, dtype=float), (len(centers),))
        counts = np.zeros(len(centers), dtype=np.int64)
        pieces = []
        for s in range(0, len(centers), chunk):
            e = min(s + chunk, len(centers))
            rad = radius[s:e]
            reach = math.ceil(rad.max() / self.cell_size) if e > s else 0
            rows, cols = [], []
            for r, pts in self._candidates(self._cells(centers[s:e]), reach):
                d2 = np.sum((self.positions[pts] - centers[s + r]) ** 2, axis=1)
                keep = d2 < rad[r] ** 2
                if self_query:
                    keep &= pts != s + r
                rows.append(r[keep])
                cols.append(pts[keep])
            if rows:
                r = np.concatenate(rows) + s
                c = np.concatenate(cols)
                order = np.lexsort((c, r))
                r, c = r[order], c[order]
                counts += np.bincount(r, minlength=len(centers))
                pieces.append(c)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        indices = np.concatenate(pieces) if pieces else np.empty(0, dtype=np.int64)
        return indptr, indices

    def nearest_distances(self, radius: float) -> np.ndarray:
        """Distance from each point to its nearest other point (inf if none within radius)."""
        indptr, indices = self.query_all(radius)
        out = np.full(len(self.positions), np.inf)
        rows = np.repeat(np.arange(len(self.positions)), np.diff(indptr))
        d = np.linalg.norm(self.positions[indices] - self.positions[rows], axis=1)
        np.minimum.at(out, rows, d)
        return out


def build_index(cloud_or_positions, cell_size: float) -> SpatialIndex:
    positions = getattr(cloud_or_positions, "positions", cloud_or_positions)
    return SpatialIndex(positions, cell_size)


@dataclass(frozen=True, eq=False)
class Neighborhood:
    center: int
    neighbors: np.ndarray
    midpoints: np.ndarray
    half_edges: np.ndarray
    weights: np.ndarray
    epsilon: float

    def __len__(self):
        return len(self.neighbors)


def make_neighborhood(positions: np.ndarray, i: int, neighbors: np.ndarray, epsilon: float,
                      kernel: WeightKernel) -> Neighborhood:
    xi = positions[i]
    mid = 0.5 * (xi + positions[neighbors])
    half = mid - xi
    w = midpoint_weights(kernel, np.linalg.norm(half, axis=1), epsilon)
    keep = w > 0
    return Neighborhood(i, neighbors[keep], mid[keep], half[keep], w[keep], epsilon)


def build_neighborhood(index: SpatialIndex, cloud, i: int, epsilon: float,
                       kernel: WeightKernel | None = None, min_count: int = 1) -> Neighborhood:
    """Stencil of point ``i``: neighbours within ``epsilon`` sorted by index."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    kernel = kernel or WeightKernel()
    positions = getattr(cloud, "positions", cloud)
    nbrs = index.query(positions[i], epsilon)
    nbrs = nbrs[nbrs != i]
    nb = make_neighborhood(positions, i, nbrs, epsilon, kernel)
    if len(nb) < min_count:
        raise StencilDeficientError(i, len(nb), min_count)
    return nb


def unisolvency_floor(degree: int, dim: int, staggered: bool = True) -> int:
    """Minimum sample count for a degree-``degree`` fit (the basis dimension)."""
    return basis_size(dim, degree, include_constant=not staggered)


def select_epsilon(m: int, d: int, h: float, safety: float = 3.0) -> float:
    """Support radius ``c(m, d) * h``.

    Tabulated multipliers are used for even ``m <= 6``; otherwise (or when the
    table falls short) ``c`` is the smallest value whose expected lattice
    neighbour count reaches ``safety`` times the basis dimension.
    """
    if m < 1:
        raise ValueError("degree m must be >= 1")
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    if h <= 0:
        raise ValueError("spacing h must be positive")
    q = basis_size(d, m, include_constant=False)
    unit_ball = math.pi if d == 2 else 4.0 * math.pi / 3.0
    c = (safety * q / unit_ball) ** (1.0 / d)
    table = EPSILON_MULTIPLIERS[d]
    if m in table:
        c = max(c, table[m])
    elif m + 1 in table:
        c = max(c, table[m + 1])
    return c * h


def write_stencil_sizes(path, indptr: np.ndarray, eps: np.ndarray) -> None:
    """CSV diagnostic: point index, neighbour count, support radius."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "count", "epsilon"])
        for i, (n, e) in enumerate(zip(np.diff(indptr), eps)):
            w.writerow([i, int(n), repr(float(e))])
