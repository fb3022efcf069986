import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagmls.basis import TaylorBasis, basis_size, multi_indices


def test_multi_index_order_2d():
    assert multi_indices(2, 2, False) == ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


@pytest.mark.parametrize("dim,degree", [(2, 2), (2, 4), (2, 6), (3, 2), (3, 4), (3, 6)])
def test_basis_size_counts_indices(dim, degree):
    assert basis_size(dim, degree) == len(multi_indices(dim, degree))
    assert basis_size(dim, degree, False) == math.comb(degree + dim, dim) - 1


def test_eval_row_vanishes_at_center():
    b = TaylorBasis(np.array([0.3, -0.2]), 1.0, 2)
    np.testing.assert_array_equal(b.eval_row(b.center), np.zeros(5))


def test_eval_row_unit_offset():
    b = TaylorBasis(np.zeros(2), 1.0, 2)
    np.testing.assert_allclose(b.eval_row([1.0, 0.0]), [1, 0, 0.5, 0, 0])


def test_eval_row_scaling():
    b = TaylorBasis(np.zeros(2), 0.5, 2)
    np.testing.assert_allclose(b.eval_row([0.5, 0.5]), [1, 1, 0.5, 1, 0.5])


def test_laplacian_at_center():
    np.testing.assert_allclose(TaylorBasis(np.zeros(2), 1.0, 2).laplacian_at_center(), [0, 0, 1, 0, 1])
    np.testing.assert_allclose(TaylorBasis(np.zeros(2), 0.5, 2).laplacian_at_center(), [0, 0, 4, 0, 4])


def test_laplacian_at_center_3d():
    eps = 0.3
    lap = TaylorBasis(np.zeros(3), eps, 2).laplacian_at_center()
    nz = lap[lap != 0]
    assert len(nz) == 3
    np.testing.assert_allclose(nz, 1 / eps**2)


def test_laplacian_needs_degree_two():
    with pytest.raises(ValueError):
        TaylorBasis(np.zeros(2), 1.0, 1).laplacian_at_center()


def test_gradient_at_center():
    g = TaylorBasis(np.zeros(2), 1.0, 2).gradient_at_center()
    np.testing.assert_array_equal(g, [[1, 0], [0, 1], [0, 0], [0, 0], [0, 0]])
    np.testing.assert_allclose(TaylorBasis(np.zeros(2), 0.25, 1).gradient_at_center(), 4 * np.eye(2))


def test_normal_derivative_at_center():
    b = TaylorBasis(np.zeros(2), 1.0, 2)
    np.testing.assert_allclose(b.normal_derivative_at_center([1, 0]), [1, 0, 0, 0, 0])
    np.testing.assert_allclose(b.normal_derivative_at_center([0, 1]), [0, 1, 0, 0, 0])
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(b.normal_derivative_at_center([s, s]), [0.70710678118654752, s, 0, 0, 0])
    with pytest.raises(ValueError):
        b.normal_derivative_at_center([1, 1])


def test_invalid_parameters():
    with pytest.raises(ValueError):
        TaylorBasis(np.zeros(2), 0.0, 2)
    with pytest.raises(ValueError):
        TaylorBasis(np.zeros(2), 1.0, 0)


@settings(max_examples=50, deadline=None)
@given(
    center=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    point=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    eps=st.floats(0.05, 3.0),
    coeffs=st.lists(st.floats(-5, 5), min_size=5, max_size=5),
)
def test_coordinates_reproduce_polynomial(center, point, eps, coeffs):
    # sum c_a (x - x_i)^a equals the basis expansion with the returned coordinates
    b = TaylorBasis(np.array(center), eps, 2)
    poly = dict(zip(b.alphas, coeffs))
    d = np.array(point) - np.array(center)
    direct = sum(c * d[0] ** a[0] * d[1] ** a[1] for a, c in poly.items())
    via_basis = b.eval_row(point) @ b.coordinates(poly)
    assert via_basis == pytest.approx(direct, rel=1e-9, abs=1e-9)
