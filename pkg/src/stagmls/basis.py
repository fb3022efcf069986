"""Scaled and shifted Taylor monomial bases.

A member of the basis centred at ``x_i`` with scale ``eps`` is

    p_alpha(x) = prod_k ((x - x_i)_k / eps) ** alpha_k / alpha_k!

Multi-indices are stored in graded-lexicographic order: by total degree, and
within one degree by decreasing exponent of the first coordinate, then the
second, and so on.  For ``d = 2, m = 2`` (constant excluded) this gives
``(1,0), (0,1), (2,0), (1,1), (0,2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial

import numpy as np


@lru_cache(maxsize=None)
def multi_indices(dim: int, degree: int, include_constant: bool = True) -> tuple[tuple[int, ...], ...]:
    """All multi-indices with ``|alpha| <= degree`` in graded-lex order."""
    if dim < 1 or degree < 0:
        raise ValueError("dim must be >= 1 and degree >= 0")

    def of_order(d: int, n: int):
        if d == 1:
            yield (n,)
            return
        for first in range(n, -1, -1):
            for rest in of_order(d - 1, n - first):
                yield (first,) + rest

    start = 0 if include_constant else 1
    return tuple(a for n in range(start, degree + 1) for a in of_order(dim, n))


def basis_size(dim: int, degree: int, include_constant: bool = True) -> int:
    return comb(degree + dim, dim) - (0 if include_constant else 1)


def monomials(offsets: np.ndarray, degree: int, include_constant: bool = True) -> np.ndarray:
    """Evaluate the unit-scale Taylor monomials at already scaled offsets.

    ``offsets`` has shape ``(..., d)``; the result has shape ``(..., Q)``.
    """
    offsets = np.asarray(offsets, dtype=float)
    dim = offsets.shape[-1]
    alphas = np.array(multi_indices(dim, degree, include_constant), dtype=int)
    # powers[..., k, p] = s_k**p / p!
    powers = np.empty(offsets.shape + (degree + 1,))
    powers[..., 0] = 1.0
    for p in range(1, degree + 1):
        powers[..., p] = powers[..., p - 1] * offsets / p
    out = np.ones(offsets.shape[:-1] + (len(alphas),))
    for k in range(dim):
        out *= powers[..., k, :][..., alphas[:, k]]
    return out


def laplacian_weights(dim: int, degree: int, include_constant: bool = True) -> np.ndarray:
    """Laplacian of each unit-scale monomial at the centre (1 for alpha = 2e_k)."""
    alphas = multi_indices(dim, degree, include_constant)
    return np.array([1.0 if sum(a) == 2 and max(a) == 2 else 0.0 for a in alphas])


def gradient_weights(dim: int, degree: int, include_constant: bool = True) -> np.ndarray:
    """Gradient of each unit-scale monomial at the centre, shape ``(Q, d)``."""
    alphas = multi_indices(dim, degree, include_constant)
    out = np.zeros((len(alphas), dim))
    for q, a in enumerate(alphas):
        if sum(a) == 1:
            out[q, a.index(1)] = 1.0
    return out


@dataclass(frozen=True)
class TaylorBasis:
    """Taylor monomials of degree ``<= degree`` about ``center`` scaled by ``eps``.

    With ``include_constant=False`` the basis spans the polynomials vanishing
    at the centre, which is the reconstruction space of the staggered scheme.
    """

    center: np.ndarray
    eps: float
    degree: int
    include_constant: bool = False
    alphas: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if self.eps <= 0:
            raise ValueError("basis scale eps must be positive")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "alphas", multi_indices(center.size, self.degree, self.include_constant))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def size(self) -> int:
        return len(self.alphas)

    def eval_row(self, x) -> np.ndarray:
        """Values of every basis member at ``x`` (shape ``(..., d)`` -> ``(..., Q)``)."""
        x = np.asarray(x, dtype=float)
        return monomials((x - self.center) / self.eps, self.degree, self.include_constant)

    def laplacian_at_center(self) -> np.ndarray:
        if self.degree < 2:
            raise ValueError("the Laplacian needs degree >= 2")
        return laplacian_weights(self.dim, self.degree, self.include_constant) / self.eps**2

    def gradient_at_center(self) -> np.ndarray:
        return gradient_weights(self.dim, self.degree, self.include_constant) / self.eps

    def normal_derivative_at_center(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("normal must have unit length")
        return self.gradient_at_center() @ n

    def coordinates(self, poly_coeffs: dict[tuple[int, ...], float]) -> np.ndarray:
        """Coordinates of a polynomial given as ``{alpha: c}`` in powers of ``(x - x_i)``.

        ``sum_alpha c_alpha (x - x_i)**alpha`` has coordinate
        ``c_alpha * alpha! * eps**|alpha|`` on ``p_alpha``.
        """
        index = {a: q for q, a in enumerate(self.alphas)}
        out = np.zeros(self.size)
        for a, c in poly_coeffs.items():
            if a not in index:
                raise ValueError(f"monomial {a} is not in the basis")
            out[index[a]] = c * np.prod([factorial(k) for k in a]) * self.eps ** sum(a)
        return out
