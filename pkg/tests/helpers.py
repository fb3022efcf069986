"""Independent oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math

import numpy as np

from stagmls.geometry import PointCloud, PointKind
from stagmls.neighbors import SpatialIndex, WeightKernel, build_neighborhood


class Poly:
    """Polynomial as ``{exponent tuple: coefficient}``, differentiated term by term."""

    def __init__(self, terms: dict[tuple[int, ...], float]):
        self.terms = {k: float(v) for k, v in terms.items() if v != 0.0}
        self.dim = len(next(iter(terms)))

    @classmethod
    def random(cls, rng, dim: int, degree: int, scale: float = 1.0) -> "Poly":
        terms = {}
        for a in itertools.product(range(degree + 1), repeat=dim):
            if sum(a) <= degree:
                terms[a] = rng.uniform(-1, 1) * scale
        return cls(terms)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x))
        for a, c in self.terms.items():
            out += c * np.prod(x ** np.array(a), axis=1)
        return out

    def derivative(self, k: int) -> "Poly":
        terms = {}
        for a, c in self.terms.items():
            if a[k] > 0:
                b = list(a)
                b[k] -= 1
                terms[tuple(b)] = terms.get(tuple(b), 0.0) + c * a[k]
        return Poly(terms or {(0,) * self.dim: 0.0})

    def gradient(self, x) -> np.ndarray:
        return np.column_stack([self.derivative(k)(x) for k in range(self.dim)])

    def laplacian(self, x) -> np.ndarray:
        return sum(self.derivative(k).derivative(k)(x) for k in range(self.dim))


def perturbed_patch(rng, dim: int, dx: float, radius: float, eta: float = 0.1) -> np.ndarray:
    """Jittered lattice points in a ball of ``radius`` around a jittered origin point (row 0)."""
    r = int(math.ceil(radius / dx)) + 1
    axes = [np.arange(-r, r + 1) * dx] * dim
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    pts = pts[np.linalg.norm(pts, axis=1) <= radius + 2 * dx]
    order = np.argsort(np.linalg.norm(pts, axis=1), kind="stable")
    pts = pts[order] + rng.uniform(-eta * dx, eta * dx, size=pts.shape)
    return pts + rng.uniform(-1, 1, size=dim)


def interior_cloud(points: np.ndarray, dx: float) -> PointCloud:
    n = len(points)
    return PointCloud(points, np.full(n, PointKind.INTERIOR, dtype=np.int8), np.full(points.shape, np.nan), dx)


def patch_neighborhood(rng, dim: int, dx: float, eps: float, kernel: WeightKernel | None = None):
    pts = perturbed_patch(rng, dim, dx, eps)
    cloud = interior_cloud(pts, dx)
    nb = build_neighborhood(SpatialIndex(pts, eps), cloud, 0, eps, kernel)
    return cloud, nb


def kkt_coefficients(P: np.ndarray, w: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Minimise ``1/2 a^T W^{-1} a`` subject to ``P^T a = r`` by a dense KKT solve.

    ``P`` is (K, Q) basis values at the samples, ``w`` the K weights.  The
    minimiser is the GMLS sample-space coefficient vector for target ``r``.
    """
    K, Q = P.shape
    A = np.zeros((K + Q, K + Q))
    A[:K, :K] = np.diag(1.0 / w)
    A[:K, K:] = P
    A[K:, :K] = P.T
    rhs = np.concatenate([np.zeros(K), r])
    return np.linalg.solve(A, rhs)[:K]
