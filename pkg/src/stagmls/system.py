"""Global assembly and solution of the discrete diffusion problem.

Sign convention: assembled rows approximate ``div(mu grad phi)`` and the
right-hand side of an interior or Neumann row is ``-f`` for the model
``-div(mu grad phi) = f``.  Dirichlet rows are identity rows carrying the
boundary value.  Known Dirichlet neighbours are moved to the right-hand side,
as are the Neumann terms ``gamma_i g_i``.

The collocated baseline uses the same conventions.  Its interior rows apply
the GMLS divergence to the nodal flux ``mu G phi``, where ``G`` is the
collocated gradient; its Neumann rows impose ``n . mu G phi = g``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import PointCloud, PointKind
from .gmls import StencilSet


class SolverError(RuntimeError):
    def __init__(self, message: str, residuals: list[float] | None = None):
        super().__init__(message)
        self.residuals = residuals or []


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    kind: np.ndarray
    # bordered systems carry extra unknowns after the point values
    n_points: int = -1

    def __post_init__(self):
        if self.n_points < 0:
            object.__setattr__(self, "n_points", self.matrix.shape[0])


@dataclass(frozen=True)
class SolveReport:
    solver: str
    iterations: int
    residual: float
    wall_time: float


@dataclass(frozen=True)
class PinPoint:
    index: int
    value: float = 0.0


@dataclass(frozen=True)
class MeanZero:
    pass


def _evaluate(data, positions, default=0.0):
    if data is None:
        return np.full(len(positions), default)
    if callable(data):
        return np.asarray(data(positions), dtype=float) * np.ones(len(positions))
    return np.broadcast_to(np.asarray(data, dtype=float), (len(positions),)).copy()


def assemble(
    cloud: PointCloud,
    stencils: StencilSet,
    f=None,
    u=None,
    g=None,
    mu=1.0,
    mean: str = "arithmetic",
) -> SparseSystem:
    """Assemble the global system.

    ``f``, ``u`` and ``mu`` are arrays over the points or callables of the
    positions.  ``g`` (the outward flux ``n . mu grad phi``) is an array or a
    callable of ``(positions, normals)``.
    """
    n = len(cloud)
    if stencils.n != n:
        raise ValueError(f"stencil set covers {stencils.n} points but the cloud has {n}")
    x = np.asarray(cloud.positions)
    kind = np.asarray(cloud.kind)
    dirichlet = kind == PointKind.DIRICHLET
    neumann = kind == PointKind.NEUMANN
    mu_p = _evaluate(mu, x, 1.0)
    if np.any(mu_p <= 0):
        raise ValueError("mu must be positive at every point")
    f_p = _evaluate(f, x)
    u_p = np.where(dirichlet, _evaluate(u, x), 0.0)
    if callable(g):
        g_p = np.zeros(n)
        if neumann.any():
            g_p[neumann] = np.asarray(g(x[neumann], np.asarray(cloud.normals)[neumann]), dtype=float)
    else:
        g_p = _evaluate(g, x)

    if stencils.scheme == "staggered":
        beta = stencils.edge_mu(mu_p, mean) * stencils.lap
        op = _difference_matrix(stencils, beta, n)
        rhs = -f_p - np.where(neumann, stencils.lap_g * g_p, 0.0)
    else:
        grads = [_difference_matrix(stencils, stencils.grad[:, k], n) for k in range(cloud.dim)]
        if np.ptp(mu_p) == 0.0:
            interior = mu_p[0] * _difference_matrix(stencils, stencils.lap, n)
        else:
            # divergence of the nodal flux mu_j grad phi_j, both from point-value fits
            interior = sum(G @ sp.diags(mu_p) @ G for G in grads)
        nrm = np.nan_to_num(np.asarray(cloud.normals))
        flux_n = sum(sp.diags(mu_p * nrm[:, k]) @ G for k, G in enumerate(grads))
        op = sp.diags(neumann.astype(float)) @ flux_n + sp.diags((~neumann).astype(float)) @ interior
        rhs = np.where(neumann, g_p, -f_p)
    return _eliminate_dirichlet(op.tocsr(), rhs, dirichlet, u_p, kind)


def _difference_matrix(stencils: StencilSet, coeffs: np.ndarray, n: int) -> sp.csr_matrix:
    """Sparse form of ``sum_j c_ij (phi_j - phi_i)``."""
    rows = stencils.rows
    off = sp.csr_matrix((coeffs, (rows, stencils.indices)), shape=(n, n))
    return (off - sp.diags(np.bincount(rows, coeffs, minlength=n))).tocsr()


def _eliminate_dirichlet(op, rhs, dirichlet, u_p, kind) -> SparseSystem:
    keep = sp.diags((~dirichlet).astype(float))
    rhs = np.where(dirichlet, u_p, rhs - op @ u_p)
    matrix = (keep @ op @ keep + sp.diags(dirichlet.astype(float))).tocsr()
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return SparseSystem(matrix, rhs, kind.copy())


def fix_null_space(system: SparseSystem, strategy) -> SparseSystem:
    """Remove the constant null space of an all-Neumann system.

    ``PinPoint`` replaces one row by an identity row; ``MeanZero`` borders the
    matrix with a multiplier that enforces a zero-mean solution.
    """
    if np.any(system.kind == PointKind.DIRICHLET):
        raise ValueError("null-space handling applies only when no point is Dirichlet")
    n = system.n_points
    A = system.matrix.tolil()
    if isinstance(strategy, PinPoint):
        if not 0 <= strategy.index < n:
            raise IndexError(f"pin index {strategy.index} out of range [0, {n})")
        A.rows[strategy.index] = [strategy.index]
        A.data[strategy.index] = [1.0]
        rhs = system.rhs.copy()
        rhs[strategy.index] = strategy.value
        return SparseSystem(A.tocsr(), rhs, system.kind, n)
    if isinstance(strategy, MeanZero):
        ones = sp.csr_matrix(np.ones((n, 1)))
        bordered = sp.bmat([[system.matrix, ones], [ones.T, None]], format="csr")
        return SparseSystem(bordered, np.concatenate([system.rhs, [0.0]]), system.kind, n)
    raise TypeError(f"unknown null-space strategy {strategy!r}")


def residual_norm(system: SparseSystem, x: np.ndarray) -> float:
    b = system.rhs
    r = system.matrix @ x - b
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / (nb if nb > 0 else 1.0))


def solve(
    system: SparseSystem,
    method: str = "direct",
    tol: float = 1e-10,
    max_iter: int = 5000,
    restart: int = 100,
    preconditioner: str = "jacobi",
) -> tuple[np.ndarray, SolveReport]:
    """Solve with sparse LU (``"direct"``) or preconditioned ``"gmres"`` / ``"bicgstab"``."""
    A = system.matrix
    if A.shape[0] != A.shape[1]:
        raise ValueError("system matrix must be square")
    b = system.rhs
    t0 = time.perf_counter()
    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"direct solve failed: {exc}") from exc
        x = lu.solve(b)
        # one step of refinement keeps the backward error at roundoff on stiff rows
        x += lu.solve(b - A @ x)
        iterations = 1
    elif method in ("gmres", "bicgstab"):
        M = _preconditioner(A, preconditioner)
        history: list[float] = []
        bnorm = np.linalg.norm(b) or 1.0
        if method == "gmres":
            x, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=restart, maxiter=max_iter, M=M,
                                 callback=lambda r: history.append(float(r)), callback_type="pr_norm")
        else:
            x, info = spla.bicgstab(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=M,
                                    callback=lambda xk: history.append(float(np.linalg.norm(b - A @ xk) / bnorm)))
        iterations = len(history)
        if info != 0 or not np.all(np.isfinite(x)):
            raise SolverError(f"{method} did not converge (info={info})", history)
    else:
        raise ValueError(f"unknown solver {method!r}")
    wall = time.perf_counter() - t0
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values")
    report = SolveReport(method, iterations, residual_norm(system, x), wall)
    if method != "direct" and report.residual > max(10 * tol, 1e-14):
        raise SolverError(f"{method} stopped at true residual {report.residual:.3e}")
    return x, report


def _preconditioner(A, kind: str):
    if kind == "none":
        return None
    if kind == "jacobi":
        d = A.diagonal()
        d = np.where(d != 0, d, 1.0)
        return spla.LinearOperator(A.shape, matvec=lambda v: v / d)
    if kind == "ilu":
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
        return spla.LinearOperator(A.shape, matvec=ilu.solve)
    raise ValueError(f"unknown preconditioner {kind!r}")


def reconstruct_flux(
    cloud: PointCloud,
    stencils: StencilSet,
    phi: np.ndarray,
    mu=1.0,
    g=None,
    mean: str = "arithmetic",
) -> np.ndarray:
    """Physical flux ``-mu grad phi`` at every point, shape ``(N, d)``."""
    x = np.asarray(cloud.positions)
    phi = np.asarray(phi, dtype=float)[: len(cloud)]
    mu_p = _evaluate(mu, x, 1.0)
    rows, cols = stencils.rows, stencils.indices
    diff = phi[cols] - phi[rows]
    out = np.zeros((len(cloud), cloud.dim))
    if stencils.scheme == "staggered":
        np.add.at(out, rows, stencils.grad * (stencils.edge_mu(mu_p, mean) * diff)[:, None])
        neumann = np.asarray(cloud.kind == PointKind.NEUMANN)
        if g is not None and neumann.any():
            if callable(g):
                g_p = np.zeros(len(cloud))
                g_p[neumann] = g(x[neumann], np.asarray(cloud.normals)[neumann])
            else:
                g_p = np.asarray(g, dtype=float)
            out[neumann] += stencils.grad_g[neumann] * g_p[neumann, None]
    else:
        np.add.at(out, rows, stencils.grad * diff[:, None])
        out *= mu_p[:, None]
    return -out


def export_matrix_market(system: SparseSystem, path) -> None:
    scipy.io.mmwrite(str(path), system.matrix)
