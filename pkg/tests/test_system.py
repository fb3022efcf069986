import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from helpers import Poly
from stagmls.geometry import Annulus, PointKind, UnitSquare, all_neumann, discretize
from stagmls.gmls import build_stencils
from stagmls.system import (
    MeanZero,
    PinPoint,
    SolverError,
    SparseSystem,
    assemble,
    export_matrix_market,
    fix_null_space,
    reconstruct_flux,
    solve,
)


@pytest.fixture(scope="module")
def square():
    dx = 1 / 16
    cloud = discretize(UnitSquare(), dx, 0.1 * dx, 0)
    return cloud, build_stencils(cloud, 2)


@pytest.fixture(scope="module")
def square_neumann():
    dx = 1 / 16
    cloud = discretize(UnitSquare(), dx, 0.1 * dx, 0, all_neumann)
    return cloud, build_stencils(cloud, 2)


def test_all_dirichlet_is_identity(square):
    cloud, st = square
    dcloud = cloud.with_kinds(np.full(len(cloud), PointKind.DIRICHLET))
    u = np.arange(len(cloud), dtype=float)
    system = assemble(dcloud, st, u=u)
    assert (system.matrix != sp.identity(len(cloud))).nnz == 0
    x, _ = solve(system)
    np.testing.assert_array_equal(x, u)


def test_zero_data_zero_solution(square):
    cloud, st = square
    x, report = solve(assemble(cloud, st))
    np.testing.assert_array_equal(x, 0.0)
    assert report.residual == 0.0


@pytest.mark.parametrize("m", [2, 4])
@pytest.mark.parametrize("scheme", ["staggered", "collocated"])
def test_polynomial_solution_is_exact(m, scheme):
    rng = np.random.default_rng(m)
    p = Poly.random(rng, 2, m)
    dx = 1 / 12
    cloud = discretize(UnitSquare(), dx, 0.1 * dx, 1)
    st = build_stencils(cloud, m, scheme)
    x, _ = solve(assemble(cloud, st, f=lambda y: -p.laplacian(y), u=p))
    exact = p(cloud.positions)
    assert np.abs(x - exact).max() <= 1e-7 * np.abs(exact).max()
    flux = reconstruct_flux(cloud, st, x)
    np.testing.assert_allclose(flux, -p.gradient(cloud.positions), atol=1e-6 * np.abs(exact).max())


def test_polynomial_solution_neumann_mixed():
    # Neumann on the left and right sides, Dirichlet elsewhere
    def bc(x, n):
        return "neumann" if abs(n[0]) > 0.5 else "dirichlet"

    rng = np.random.default_rng(9)
    p = Poly.random(rng, 2, 4)
    dx = 1 / 12
    cloud = discretize(UnitSquare(), dx, 0.1 * dx, 2, bc)
    st = build_stencils(cloud, 4)
    g = lambda y, n: np.einsum("kd,kd->k", n, p.gradient(y))  # noqa: E731
    x, _ = solve(assemble(cloud, st, f=lambda y: -p.laplacian(y), u=p, g=g))
    exact = p(cloud.positions)
    assert np.abs(x - exact).max() <= 1e-7 * np.abs(exact).max()


def test_linear_flux_with_constant_mu(square):
    cloud, st = square
    x, _ = solve(assemble(cloud, st, u=lambda y: y[:, 0]))
    np.testing.assert_allclose(reconstruct_flux(cloud, st, x), np.tile([-1.0, 0.0], (len(cloud), 1)), atol=1e-10)


def test_row_sums(square):
    cloud, st = square
    system = assemble(cloud, st, mu=lambda y: 1 + y[:, 0] ** 2)
    inner = cloud.kind == PointKind.INTERIOR
    sums = np.asarray(system.matrix.sum(axis=1)).ravel()
    # interior rows with no Dirichlet neighbour sum to zero
    csr = system.matrix
    dirichlet = cloud.kind == PointKind.DIRICHLET
    for i in np.flatnonzero(inner)[:50]:
        nb = st.indices[st.indptr[i]:st.indptr[i + 1]]
        if not dirichlet[nb].any():
            assert abs(sums[i]) <= 1e-10 * np.abs(csr[i].data).max()


def test_assembly_deterministic(square):
    cloud, st = square
    a = assemble(cloud, st, f=1.0, u=lambda y: y[:, 1])
    b = assemble(cloud, st, f=1.0, u=lambda y: y[:, 1])
    for name in ("data", "indices", "indptr"):
        np.testing.assert_array_equal(getattr(a.matrix, name), getattr(b.matrix, name))
    np.testing.assert_array_equal(a.rhs, b.rhs)


def test_assembly_checks(square):
    cloud, st = square
    with pytest.raises(ValueError, match="positive"):
        assemble(cloud, st, mu=0.0)
    small = discretize(UnitSquare(), 1 / 8)
    with pytest.raises(ValueError, match="stencil set"):
        assemble(small, st)


def test_direct_and_krylov_agree():
    dx = np.pi / 32
    cloud = discretize(Annulus(), dx, 0.1 * dx, 0)
    st = build_stencils(cloud, 2)
    system = assemble(cloud, st, f=lambda y: 2 * np.sin(y[:, 0]) * np.sin(y[:, 1]),
                      u=lambda y: np.sin(y[:, 0]) * np.sin(y[:, 1]))
    xd, rd = solve(system, "direct")
    assert rd.residual <= 1e-12
    for method in ("gmres", "bicgstab"):
        for pre in ("jacobi", "ilu"):
            xk, rk = solve(system, method, tol=1e-12, preconditioner=pre)
            assert rk.iterations > 0
            assert np.abs(xk - xd).max() <= 1e-8


def test_krylov_failure_reports_history(square):
    cloud, st = square
    system = assemble(cloud, st, f=1.0)
    with pytest.raises(SolverError) as err:
        solve(system, "gmres", tol=1e-14, max_iter=1, restart=2, preconditioner="none")
    assert len(err.value.residuals) > 0


def test_unknown_solver(square):
    cloud, st = square
    with pytest.raises(ValueError):
        solve(assemble(cloud, st), "cg")


def test_identity_solve():
    b = np.array([1.0, -2.0, 3.0])
    system = SparseSystem(sp.identity(3, format="csr"), b, np.zeros(3, dtype=np.int8))
    for method in ("direct", "gmres", "bicgstab"):
        np.testing.assert_allclose(solve(system, method)[0], b)


def test_pin_point_gives_constant(square_neumann):
    cloud, st = square_neumann
    system = fix_null_space(assemble(cloud, st), PinPoint(0, 5.0))
    x, _ = solve(system)
    np.testing.assert_allclose(x, 5.0, rtol=1e-10)


def test_mean_zero_gives_zero(square_neumann):
    cloud, st = square_neumann
    system = fix_null_space(assemble(cloud, st), MeanZero())
    assert system.matrix.shape == (len(cloud) + 1, len(cloud) + 1)
    x, _ = solve(system)
    np.testing.assert_allclose(x, 0.0, atol=1e-12)


def test_mean_zero_recovers_shifted_solution(square_neumann):
    cloud, st = square_neumann
    p = Poly({(2, 0): 1.0, (0, 2): -1.0, (1, 0): 0.5})
    g = lambda y, n: np.einsum("kd,kd->k", n, p.gradient(y))  # noqa: E731
    x, _ = solve(fix_null_space(assemble(cloud, st, f=lambda y: -p.laplacian(y), g=g), MeanZero()))
    exact = p(cloud.positions)
    np.testing.assert_allclose(x[: len(cloud)], exact - exact.mean(), atol=1e-9)


def test_null_space_errors(square, square_neumann):
    with pytest.raises(ValueError):
        fix_null_space(assemble(*square), MeanZero())
    with pytest.raises(IndexError):
        fix_null_space(assemble(*square_neumann), PinPoint(10**6))
    with pytest.raises(TypeError):
        fix_null_space(assemble(*square_neumann), "pin")


def test_matrix_market_round_trip(square, tmp_path):
    cloud, st = square
    system = assemble(cloud, st, mu=lambda y: 1 + y[:, 0])
    path = tmp_path / "A.mtx"
    export_matrix_market(system, path)
    back = scipy.io.mmread(str(path)).tocsr()
    assert abs(back - system.matrix).max() == 0.0
