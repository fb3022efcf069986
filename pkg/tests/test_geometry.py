import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagmls.geometry import (
    Annulus,
    ExtrudedAnnulus,
    PointCloud,
    PointKind,
    UnitSquare,
    all_neumann,
    characteristic_spacing,
    discretize,
    measured_spacing,
)


def test_unit_square_lattice_count():
    cloud = discretize(UnitSquare(), 0.25, 0.0, 0, guard=0.0)
    assert len(cloud) == 25
    assert np.sum(cloud.kind == PointKind.INTERIOR) == 9
    assert np.sum(cloud.boundary) == 16
    expected = {(i * 0.25, j * 0.25) for i, j in itertools.product(range(1, 4), repeat=2)}
    got = {tuple(np.round(p, 12)) for p in cloud.positions[cloud.kind == PointKind.INTERIOR]}
    assert got == expected


def test_boundary_points_lie_on_boundary_with_unit_normals():
    for domain, dx in ((UnitSquare(), 0.1), (Annulus(), 0.1), (ExtrudedAnnulus(), 0.2)):
        cloud = discretize(domain, dx, 0.1 * dx, 3)
        b = cloud.boundary
        np.testing.assert_allclose(domain.signed_distance(cloud.positions[b]), 0.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(cloud.normals[b], axis=1), 1.0)
        assert np.all(np.isnan(cloud.normals[~b]))


def test_normals_point_outward():
    domain = Annulus()
    cloud = discretize(domain, 0.1)
    b = cloud.boundary
    probe = cloud.positions[b] + 1e-3 * cloud.normals[b]
    assert np.all(domain.signed_distance(probe) > 0)


@pytest.mark.parametrize("domain,dx", [(UnitSquare(), 0.05), (Annulus(), 0.05), (ExtrudedAnnulus(), 0.2)])
def test_jittered_interior_points_stay_inside(domain, dx):
    # largest jitter allowed by the guard band: eta * sqrt(d) < dx / 2
    eta = 0.99 * 0.5 * dx / np.sqrt(domain.dim)
    cloud = discretize(domain, dx, eta, 11)
    inner = cloud.kind == PointKind.INTERIOR
    assert np.all(domain.signed_distance(cloud.positions[inner]) < 0)


def test_determinism_and_seed_dependence():
    a = discretize(Annulus(), 0.1, 0.01, 7)
    b = discretize(Annulus(), 0.1, 0.01, 7)
    c = discretize(Annulus(), 0.1, 0.01, 8)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.kind, b.kind)
    assert not np.array_equal(a.positions, c.positions)


def test_unperturbed_cloud_ignores_seed():
    a = discretize(UnitSquare(), 0.1, 0.0, 1)
    b = discretize(UnitSquare(), 0.1, 0.0, 2)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_point_count_scales_with_resolution():
    n1 = len(discretize(Annulus(), 0.1))
    n2 = len(discretize(Annulus(), 0.05))
    assert 3.5 < n2 / n1 < 4.5


def test_bc_assignment():
    cloud = discretize(UnitSquare(), 0.25, 0.0, 0, all_neumann)
    assert np.all(cloud.kind[cloud.boundary] == PointKind.NEUMANN)
    with pytest.raises(ValueError):
        discretize(UnitSquare(), 0.25, 0.0, 0, lambda x, n: "robin")


def test_errors():
    with pytest.raises(ValueError, match="resolution too coarse"):
        discretize(UnitSquare(), 2.0)
    with pytest.raises(ValueError):
        discretize(UnitSquare(), 0.1, 0.06)
    with pytest.raises(ValueError):
        discretize(UnitSquare(), -0.1)


def test_spacing():
    cloud = discretize(UnitSquare(), 0.1, 0.01, 0)
    assert characteristic_spacing(cloud) == 0.1
    lattice = discretize(UnitSquare(), 0.25, 0.0, 0, guard=0.0)
    # brute-force nearest distances
    x = lattice.positions
    d = np.linalg.norm(x[:, None] - x[None], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min(axis=1).min() == pytest.approx(0.25)
    assert measured_spacing(lattice) == pytest.approx(d.min(axis=1).max())
    assert measured_spacing(lattice) == pytest.approx(0.25)


def test_measured_spacing_needs_two_points():
    single = PointCloud(np.zeros((1, 2)), np.zeros(1, dtype=np.int8), np.full((1, 2), np.nan), 0.1)
    with pytest.raises(ValueError, match="need >= 2 points"):
        measured_spacing(single)


def test_cloud_is_immutable():
    cloud = discretize(UnitSquare(), 0.25)
    with pytest.raises(ValueError):
        cloud.positions[0, 0] = 1.0


@settings(max_examples=15, deadline=None)
@given(n=st.integers(6, 24), seed=st.integers(0, 2**31), frac=st.floats(0.0, 0.35))
def test_square_containment_property(n, seed, frac):
    dx = 1.0 / n
    cloud = discretize(UnitSquare(), dx, frac * dx, seed)
    assert np.all((cloud.positions >= 0) & (cloud.positions <= 1))
    d = np.linalg.norm(cloud.positions[:, None] - cloud.positions[None], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() > 0
