import numpy as np
import pytest

from stagmls.geometry import Annulus, ExtrudedAnnulus, UnitSquare, all_neumann, discretize
from stagmls.gmls import build_stencils
from stagmls.io import (
    line_probe,
    read_cloud_csv,
    write_cloud_csv,
    write_probe_csv,
    write_solution_csv,
    write_stencil_dump,
    write_vtk,
)


@pytest.mark.parametrize("domain,dx", [(Annulus(), 0.2), (ExtrudedAnnulus(), 0.3)])
def test_cloud_round_trip_is_bit_exact(tmp_path, domain, dx):
    cloud = discretize(domain, dx, 0.1 * dx, 5, all_neumann)
    path = tmp_path / "cloud.csv"
    write_cloud_csv(path, cloud)
    back = read_cloud_csv(path, cloud.h, cloud.seed)
    np.testing.assert_array_equal(back.positions, cloud.positions)
    np.testing.assert_array_equal(back.kind, cloud.kind)
    np.testing.assert_array_equal(back.normals, cloud.normals)


def test_cloud_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,kind\n")
    with pytest.raises(ValueError):
        read_cloud_csv(path, 0.1)
    path.write_text("x,y,kind,nx,ny\n")
    with pytest.raises(ValueError, match="no points"):
        read_cloud_csv(path, 0.1)


def test_vtk_layout(tmp_path):
    cloud = discretize(UnitSquare(), 0.25)
    n = len(cloud)
    path = tmp_path / "f.vtk"
    write_vtk(path, cloud, {"phi": np.arange(n, dtype=float)}, {"flux": np.ones((n, 2))})
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2:5] == ["ASCII", "DATASET POLYDATA", f"POINTS {n} double"]
    assert f"VERTICES {n} {2 * n}" in lines
    assert f"POINT_DATA {n}" in lines
    i = lines.index("SCALARS phi double 1")
    assert [float(v) for v in lines[i + 2:i + 2 + n]] == list(range(n))
    j = lines.index("VECTORS flux double")
    assert lines[j + 1] == "1 1 0"
    pts = np.array([[float(v) for v in ln.split()] for ln in lines[5:5 + n]])
    np.testing.assert_array_equal(pts[:, :2], cloud.positions)


def test_solution_and_stencil_csv(tmp_path):
    cloud = discretize(UnitSquare(), 0.25)
    st = build_stencils(cloud, 2, epsilon=0.6)
    sol = tmp_path / "s.csv"
    write_solution_csv(sol, cloud, np.zeros(len(cloud)), np.zeros((len(cloud), 2)))
    lines = sol.read_text().splitlines()
    assert lines[0] == "x,y,phi,ux,uy" and len(lines) == len(cloud) + 1
    dump = tmp_path / "st.csv"
    write_stencil_dump(dump, st)
    lines = dump.read_text().splitlines()
    assert lines[0] == "i,j,beta,gamma,condition" and len(lines) == len(st.indices) + 1
    i, j, beta = lines[1].split(",")[:3]
    assert float(beta) == st.lap[0]


def test_line_probe(tmp_path):
    cloud = discretize(UnitSquare(), 0.1, 0.01, 0)
    values = cloud.positions[:, 1] * 3
    idx, vals = line_probe(cloud, values, 0, 0.5)
    assert np.all(np.abs(cloud.positions[idx, 0] - 0.5) <= 0.05)
    assert np.all(np.diff(cloud.positions[idx, 1]) >= 0)
    np.testing.assert_array_equal(vals, values[idx])
    with pytest.raises(ValueError, match="outside"):
        line_probe(cloud, values, 0, 3.0)
    with pytest.raises(ValueError):
        line_probe(cloud, values, 2, 0.5)
    with pytest.raises(ValueError, match="no points"):
        line_probe(cloud, values, 0, 0.55, band=1e-6)
    path = tmp_path / "p.csv"
    write_probe_csv(path, cloud, idx, vals, "ux")
    assert path.read_text().splitlines()[0] == "x,y,ux"
