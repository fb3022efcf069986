"""Local weighted least-squares stencils.

Staggered stencils
------------------
At a point ``x_i`` the edge data ``l_ij = mu_ij (phi_j - phi_i)`` are treated
as samples, at the edge midpoints, of a function vanishing at ``x_i``.  A
weighted least-squares fit ``p*`` out of the degree-``m`` polynomials that
vanish at ``x_i`` gives

    div(mu grad phi)(x_i) ~ 1/4 Lap p*(x_i),     mu grad phi(x_i) ~ 1/2 grad p*(x_i).

Both are linear in ``l``.  With ``M = P W P^T`` the coefficient vector of
``p*`` is ``b^T = l^T W P^T M^{-1}``, so the operator row is
``beta_j = 1/4 mu_ij (W P^T M^{-1} r_lap)_j`` and similarly for the flux.

At Neumann points the fit is constrained by ``d_n p*(x_i) = 2 g`` through a
Lagrange multiplier.  The resulting row is affine in ``(l, g)`` and the
coefficient of ``g`` is returned alongside the edge coefficients.

Collocated stencils
-------------------
The comparison scheme fits point values (centre included) with the full
degree-``m`` space and differentiates the fit at the centre.

All batched routines work on padded arrays: sample slots beyond a point's
neighbour count carry zero weight and therefore drop out of every sum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .basis import TaylorBasis, basis_size, gradient_weights, laplacian_weights, monomials, multi_indices
from .geometry import PointCloud, PointKind
from .neighbors import Neighborhood, SpatialIndex, WeightKernel, midpoint_weights, select_epsilon

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
EPS_GROWTH = 1.25
MAX_RETRIES = 3


class StencilError(RuntimeError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"cannot build stencil at point {index}: {reason}")
        self.index = index
        self.reason = reason


# ---------------------------------------------------------------------------
# batched local solves
# ---------------------------------------------------------------------------


def local_solve(P: np.ndarray, w: np.ndarray, targets: np.ndarray, constraint: np.ndarray | None = None):
    """Sample-space coefficients of the weighted least-squares derivative.

    Parameters
    ----------
    P : (B, K, Q) basis values at the sample sites.
    w : (B, K) sample weights (zero for padding).
    targets : (Q, T) or (B, Q, T) target functionals applied to the basis.
    constraint : (B, Q), optional
        Functional ``c`` imposing ``c . b = data`` exactly on the fit.

    Returns
    -------
    coeffs : (B, K, T) with ``target_t(p*) = sum_k coeffs[k, t] * sample_k``
        (plus ``data * extra[t]`` when constrained).
    extra : (B, T) coefficient of the constraint datum (zeros if unconstrained).
    cond : (B,) 2-norm condition number of the diagonally scaled Gram matrix.
    """
    B, K, Q = P.shape
    targets = np.broadcast_to(targets, (B,) + np.shape(targets)[-2:])
    PW = P * w[:, :, None]
    M = np.matmul(PW.transpose(0, 2, 1), P)
    diag = np.einsum("bqq->bq", M)
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.where(diag > 0, 1.0 / np.sqrt(diag), 0.0)
    Ms = M * D[:, :, None] * D[:, None, :]
    ev = np.linalg.eigvalsh(Ms)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(ev[:, 0] > 0, ev[:, -1] / ev[:, 0], np.inf)
    ok = np.isfinite(cond)
    # keep singular systems from poisoning the batched solve
    Ms[~ok] = np.eye(Q)
    rhs = targets * D[:, :, None]
    T = rhs.shape[-1]
    if constraint is None:
        Y = np.linalg.solve(Ms, rhs)
        extra = np.zeros((B, T))
    else:
        c = constraint * D
        Kmat = np.zeros((B, Q + 1, Q + 1))
        Kmat[:, :Q, :Q] = Ms
        Kmat[:, :Q, Q] = c
        Kmat[:, Q, :Q] = c
        bad = ~ok | (np.abs(c).max(axis=1) == 0)
        Kmat[bad] = np.eye(Q + 1)
        full = np.zeros((B, Q + 1, T))
        full[:, :Q] = rhs
        Yfull = np.linalg.solve(Kmat, full)
        Y = Yfull[:, :Q]
        extra = Yfull[:, Q]
        cond = np.where(bad, np.inf, cond)
    Z = Y * D[:, :, None]
    coeffs = np.matmul(P, Z) * w[:, :, None]
    return coeffs, extra, cond


# ---------------------------------------------------------------------------
# single-stencil API
# ---------------------------------------------------------------------------


def topological_gradient(phi, center: int, neighbors) -> np.ndarray:
    """Edge differences ``phi_j - phi_i``; geometry is never consulted."""
    phi = np.asarray(phi, dtype=float)
    return phi[np.asarray(neighbors)] - phi[center]


@dataclass(frozen=True, eq=False)
class OperatorRow:
    """Discrete ``div(mu grad .)`` at one point: ``sum_j beta_j (phi_j - phi_i) + rhs_coeff * g``."""

    center: int
    neighbors: np.ndarray
    coeffs: np.ndarray
    rhs_coeff: float = 0.0
    condition: float = 1.0

    @property
    def diagonal(self) -> float:
        return -float(np.sum(self.coeffs))

    def apply(self, phi, g: float = 0.0) -> float:
        return float(self.coeffs @ topological_gradient(phi, self.center, self.neighbors)) + self.rhs_coeff * g


@dataclass(frozen=True, eq=False)
class FluxRow:
    """Reconstruction of ``mu grad phi`` at one point from ``l_j = mu_j (phi_j - phi_i)``.

    ``coeffs`` has shape ``(d, K)``.  The physical flux is the negation.
    """

    center: int
    neighbors: np.ndarray
    coeffs: np.ndarray
    mu_edge: np.ndarray
    rhs_coeff: np.ndarray | None = None

    def apply_differences(self, ell, g: float = 0.0) -> np.ndarray:
        out = self.coeffs @ np.asarray(ell, dtype=float)
        if self.rhs_coeff is not None:
            out = out + self.rhs_coeff * g
        return out

    def apply(self, phi, g: float = 0.0) -> np.ndarray:
        ell = self.mu_edge * topological_gradient(phi, self.center, self.neighbors)
        return self.apply_differences(ell, g)


def _stencil_inputs(nbhd: Neighborhood, basis: TaylorBasis):
    if basis.include_constant:
        raise ValueError("staggered stencils need a basis without the constant")
    if len(nbhd) < basis.size:
        raise StencilError(nbhd.center, f"{len(nbhd)} neighbours for {basis.size} basis functions")
    P = basis.eval_row(nbhd.midpoints)[None]
    targets = np.column_stack([basis.laplacian_at_center(), basis.gradient_at_center()])
    return P, nbhd.weights[None], targets


def _check(cond: float, center: int, limit: float):
    if not np.isfinite(cond) or cond > limit:
        raise StencilError(center, f"Gram condition number {cond:.3e} exceeds {limit:.1e}")


def staggered_stencil(nbhd: Neighborhood, basis: TaylorBasis, mu_edge=1.0,
                      condition_limit: float = CONDITION_LIMIT) -> tuple[OperatorRow, FluxRow]:
    P, w, targets = _stencil_inputs(nbhd, basis)
    coeffs, _, cond = local_solve(P, w, targets)
    _check(cond[0], nbhd.center, condition_limit)
    mu = np.broadcast_to(np.asarray(mu_edge, dtype=float), (len(nbhd),)).copy()
    row = OperatorRow(nbhd.center, nbhd.neighbors, 0.25 * mu * coeffs[0, :, 0], 0.0, float(cond[0]))
    flux = FluxRow(nbhd.center, nbhd.neighbors, 0.5 * coeffs[0, :, 1:].T, mu)
    return row, flux


def staggered_stencil_neumann(nbhd: Neighborhood, basis: TaylorBasis, mu_edge, normal,
                              condition_limit: float = CONDITION_LIMIT) -> tuple[OperatorRow, FluxRow]:
    """Stencil constrained by ``d_n p*(x_i) = 2 g``; ``g`` enters through ``rhs_coeff``."""
    P, w, targets = _stencil_inputs(nbhd, basis)
    r_n = basis.normal_derivative_at_center(normal)
    coeffs, extra, cond = local_solve(P, w, targets, constraint=r_n[None])
    _check(cond[0], nbhd.center, condition_limit)
    mu = np.broadcast_to(np.asarray(mu_edge, dtype=float), (len(nbhd),)).copy()
    # the datum is 2 g: fold the 2 into the g coefficients
    row = OperatorRow(nbhd.center, nbhd.neighbors, 0.25 * mu * coeffs[0, :, 0],
                      0.5 * float(extra[0, 0]), float(cond[0]))
    flux = FluxRow(nbhd.center, nbhd.neighbors, 0.5 * coeffs[0, :, 1:].T, mu, extra[0, 1:].copy())
    return row, flux


def gmls_divergence_from_directional_samples(nbhd: Neighborhood, basis: TaylorBasis, samples):
    """Divergence and value of a vector field at ``x_i`` from ``u(x_ij) . 2 m_ij``."""
    P, w, targets = _stencil_inputs(nbhd, basis)
    coeffs, _, cond = local_solve(P, w, targets)
    _check(cond[0], nbhd.center, CONDITION_LIMIT)
    samples = np.asarray(samples, dtype=float)
    div = 0.25 * float(samples @ coeffs[0, :, 0])
    vec = 0.5 * (samples @ coeffs[0, :, 1:])
    return div, vec


def _collocated_inputs(nbhd: Neighborhood, basis: TaylorBasis, kernel: WeightKernel):
    if not basis.include_constant:
        raise ValueError("collocated stencils need a basis with the constant")
    edges = 2.0 * nbhd.half_edges
    if len(nbhd) + 1 < basis.size:
        raise StencilError(nbhd.center, f"{len(nbhd) + 1} samples for {basis.size} basis functions")
    sites = np.vstack([basis.center[None], basis.center + edges])
    w = np.concatenate([[kernel(0.0, nbhd.epsilon)], kernel(np.linalg.norm(edges, axis=1), nbhd.epsilon)])
    return basis.eval_row(sites)[None], w[None]


def collocated_laplacian_stencil(nbhd: Neighborhood, basis: TaylorBasis,
                                 kernel: WeightKernel | None = None) -> OperatorRow:
    """GMLS Laplacian at ``x_i`` from point values at ``x_i`` and its neighbours."""
    P, w = _collocated_inputs(nbhd, basis, kernel or WeightKernel())
    coeffs, _, cond = local_solve(P, w, basis.laplacian_at_center()[:, None])
    _check(cond[0], nbhd.center, CONDITION_LIMIT)
    # the centre coefficient is minus the neighbour sum, so constants map to zero exactly
    return OperatorRow(nbhd.center, nbhd.neighbors, coeffs[0, 1:, 0], 0.0, float(cond[0]))


def collocated_gradient_stencil(nbhd: Neighborhood, basis: TaylorBasis,
                                kernel: WeightKernel | None = None) -> FluxRow:
    P, w = _collocated_inputs(nbhd, basis, kernel or WeightKernel())
    coeffs, _, cond = local_solve(P, w, basis.gradient_at_center())
    _check(cond[0], nbhd.center, CONDITION_LIMIT)
    return FluxRow(nbhd.center, nbhd.neighbors, coeffs[0, 1:, :].T, np.ones(len(nbhd)))


def gmls_point_derivative(offsets, values, weights, eps: float, degree: int, alpha) -> float:
    """GMLS approximation of ``D^alpha u`` at the origin from point values at ``offsets``."""
    offsets = np.asarray(offsets, dtype=float)
    alpha = tuple(int(a) for a in alpha)
    dim = offsets.shape[1]
    alphas = multi_indices(dim, degree, True)
    if alpha not in alphas:
        raise ValueError(f"derivative {alpha} exceeds degree {degree}")
    target = np.zeros((len(alphas), 1))
    target[alphas.index(alpha), 0] = eps ** -sum(alpha)
    P = monomials(offsets / eps, degree, True)[None]
    coeffs, _, _ = local_solve(P, np.asarray(weights, dtype=float)[None], target)
    return float(np.asarray(values, dtype=float) @ coeffs[0, :, 0])


# ---------------------------------------------------------------------------
# cloud-wide stencil construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StencilSet:
    """Stencil coefficients for every point of a cloud, stored row-wise (CSR).

    Staggered (``scheme == "staggered"``), for point ``i`` with edges ``k``:

        div(mu grad phi)_i = sum_k mu_k * lap[k] * (phi_j - phi_i) + lap_g[i] * g_i
        mu grad phi_i      = sum_k mu_k * grad[k] * (phi_j - phi_i) + grad_g[i] * g_i

    The ``g`` terms are nonzero only at Neumann points, whose fits carry the
    flux constraint.  Collocated (``scheme == "collocated"``): ``lap`` and
    ``grad`` are point-value derivative weights acting on ``phi_j - phi_i``.
    """

    scheme: str
    degree: int
    indptr: np.ndarray
    indices: np.ndarray
    lap: np.ndarray
    grad: np.ndarray
    lap_g: np.ndarray
    grad_g: np.ndarray
    eps: np.ndarray
    cond: np.ndarray
    kernel: WeightKernel

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def edge_mu(self, mu_points: np.ndarray, mean: str = "arithmetic") -> np.ndarray:
        """``mu_ij`` for every stored edge from point values of ``mu``."""
        mi, mj = mu_points[self.rows], mu_points[self.indices]
        if mean == "arithmetic":
            return 0.5 * (mi + mj)
        if mean == "harmonic":
            return 2.0 * mi * mj / (mi + mj)
        raise ValueError(f"unknown mean {mean!r}")

    def neighborhood(self, i: int, positions: np.ndarray) -> Neighborhood:
        nb = self.indices[self.indptr[i]:self.indptr[i + 1]]
        mid = 0.5 * (positions[i] + positions[nb])
        half = mid - positions[i]
        w = midpoint_weights(self.kernel, np.linalg.norm(half, axis=1), self.eps[i])
        return Neighborhood(i, nb, mid, half, w, float(self.eps[i]))


def _batch_fit(positions, normals, constrained, centers, starts, counts, indices, eps_rows,
               degree, scheme, kernel):
    """Fit the stencils of ``centers``; row ``r`` uses ``indices[starts[r]:starts[r] + counts[r]]``."""
    dim = positions.shape[1]
    Kmax = int(counts.max())
    B = len(centers)
    slot = np.arange(Kmax)
    mask = slot[None, :] < counts[:, None]
    nbr = indices[np.where(mask, starts[:, None] + slot[None, :], 0)]
    e = np.where(mask[:, :, None], positions[nbr] - positions[centers][:, None, :], 0.0)
    h = eps_rows[:, None, None]
    staggered = scheme == "staggered"
    if staggered:
        sites = 0.5 * e
        w = np.where(mask, midpoint_weights(kernel, np.linalg.norm(sites, axis=2), eps_rows[:, None]), 0.0)
    else:
        sites = np.concatenate([np.zeros((B, 1, dim)), e], axis=1)
        w = np.concatenate([np.full((B, 1), kernel(0.0, 1.0)),
                            np.where(mask, kernel(np.linalg.norm(e, axis=2), eps_rows[:, None]), 0.0)], axis=1)
    P = monomials(sites / h, degree, not staggered)
    lap_t = laplacian_weights(dim, degree, not staggered)
    grad_t = gradient_weights(dim, degree, not staggered)
    inv = 1.0 / eps_rows
    targets = np.concatenate([lap_t[None, :, None] * inv[:, None, None] ** 2,
                              grad_t[None] * inv[:, None, None]], axis=2)
    lap = np.zeros((B, Kmax))
    grad = np.zeros((B, Kmax, dim))
    lap_g = np.zeros(B)
    grad_g = np.zeros((B, dim))
    cond = np.empty(B)
    con = constrained[centers] if staggered else np.zeros(B, dtype=bool)
    for sel, use in ((~con, False), (con, True)):
        if not sel.any():
            continue
        c = None
        if use:
            c = np.einsum("qd,bd->bq", grad_t, normals[centers[sel]]) * inv[sel][:, None]
        coeffs, extra, cnd = local_solve(P[sel], w[sel], targets[sel], c)
        if staggered:
            lap[sel] = 0.25 * coeffs[:, :, 0]
            grad[sel] = 0.5 * coeffs[:, :, 1:]
            # the constraint datum is 2 g
            lap_g[sel] = 0.5 * extra[:, 0]
            grad_g[sel] = extra[:, 1:]
        else:
            lap[sel] = coeffs[:, 1:, 0]
            grad[sel] = coeffs[:, 1:, 1:]
        cond[sel] = cnd
    return lap, grad, lap_g, grad_g, cond


def build_stencils(
    cloud: PointCloud,
    degree: int,
    scheme: str = "staggered",
    epsilon: float | None = None,
    multiplier: float | None = None,
    kernel: WeightKernel | None = None,
    condition_limit: float = CONDITION_LIMIT,
    max_retries: int = MAX_RETRIES,
    chunk_entries: int = 2_000_000,
) -> StencilSet:
    """Build a stencil at every point of ``cloud``.

    Staggered stencils at Neumann points carry the normal-flux constraint.
    Points whose stencil is deficient or whose Gram matrix is too badly
    conditioned get their support radius enlarged by 25 % and are rebuilt, at
    most ``max_retries`` times.
    """
    if scheme not in ("staggered", "collocated"):
        raise ValueError(f"unknown scheme {scheme!r}")
    kernel = kernel or WeightKernel()
    n, dim = cloud.positions.shape
    if epsilon is None:
        epsilon = multiplier * cloud.h if multiplier is not None else select_epsilon(degree, dim, cloud.h)
    positions = np.asarray(cloud.positions)
    normals = np.nan_to_num(np.asarray(cloud.normals))
    constrained = np.asarray(cloud.kind == PointKind.NEUMANN)
    q = basis_size(dim, degree, include_constant=scheme == "collocated")
    need = q - 1 if scheme == "collocated" else q

    eps = np.full(n, float(epsilon))
    index = SpatialIndex(positions, epsilon)
    results: dict[int, tuple] = {}
    pending = np.arange(n)
    for attempt in range(max_retries + 1):
        if attempt == 0:
            ptr, idx = index.query_all(epsilon)
        else:
            eps[pending] *= EPS_GROWTH
            ptr, idx = index.query_all(eps[pending], centers=positions[pending])
            rows = np.repeat(np.arange(len(pending)), np.diff(ptr))
            keep = idx != pending[rows]
            idx = idx[keep]
            ptr = np.concatenate([[0], np.cumsum(np.bincount(rows[keep], minlength=len(pending)))])
        counts = np.diff(ptr)
        failed = pending[counts < need].tolist()
        ok = np.flatnonzero(counts >= need)
        ok = ok[np.argsort(counts[ok], kind="stable")]
        start = 0
        while start < len(ok):
            stop = start + 1
            while stop < len(ok) and (stop - start + 1) * int(counts[ok[stop]]) * q <= chunk_entries:
                stop += 1
            local = ok[start:stop]
            centers = pending[local]
            lap, grad, lap_g, grad_g, cond = _batch_fit(
                positions, normals, constrained, centers, ptr[local], counts[local], idx,
                eps[centers], degree, scheme, kernel)
            for r, li in enumerate(local):
                i = int(centers[r])
                if not np.isfinite(cond[r]) or cond[r] > condition_limit:
                    failed.append(i)
                    continue
                c = counts[li]
                results[i] = (idx[ptr[li]:ptr[li] + c], lap[r, :c], grad[r, :c], lap_g[r], grad_g[r], cond[r])
            start = stop
        pending = np.array(sorted(failed), dtype=np.int64)
        if len(pending) == 0:
            break
        log.info("rebuilding %d stencils with enlarged support (attempt %d)", len(pending), attempt + 1)
    if len(pending):
        raise StencilError(int(pending[0]), f"deficient or ill-conditioned after {max_retries} support enlargements")

    parts = [results[i] for i in range(n)]
    counts = np.array([len(p[0]) for p in parts])
    return StencilSet(
        scheme=scheme,
        degree=degree,
        indptr=np.concatenate([[0], np.cumsum(counts)]),
        indices=np.concatenate([p[0] for p in parts]),
        lap=np.concatenate([p[1] for p in parts]),
        grad=np.concatenate([p[2] for p in parts]),
        lap_g=np.array([p[3] for p in parts]),
        grad_g=np.array([p[4] for p in parts]),
        eps=eps,
        cond=np.array([p[5] for p in parts]),
        kernel=kernel,
    )
