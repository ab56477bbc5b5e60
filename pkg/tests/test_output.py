import numpy as np
import pytest

from westervelt.mesh import make_mesh
from westervelt.output import (
    ERROR_COLUMNS,
    read_error_csv,
    write_angle_csv,
    write_error_csv,
    write_vtk,
)
from westervelt.scenarios import ErrorReport


def tiny_mesh():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elements = np.array([[0, 1, 2], [0, 2, 3]])
    facets = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    tags = np.array([1, 2, 3, 3])
    return make_mesh(2, nodes, elements, facets, tags)


def tet_mesh():
    nodes = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    elements = np.array([[0, 1, 2, 3]])
    facets = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    tags = np.array([3, 3, 3, 2])
    return make_mesh(3, nodes, elements, facets, tags)


def synthetic_report(n=4):
    rng = np.random.default_rng(11)
    cols = {name: rng.random(n) for name in ERROR_COLUMNS if name != "step"}
    return ErrorReport(
        steps=np.arange(n, dtype=np.int64),
        times=np.sort(cols["t"]),
        rel_err_psi=cols["rel_err_psi"],
        rel_err_u=cols["rel_err_u"],
        energy=cols["energy"],
        err_psi=cols["err_psi_l2"],
        ref_psi=cols["ref_psi_l2"],
        err_u=cols["err_u_l2"],
        ref_u=cols["ref_u_l2"],
        e_psi=0.1,
        e_u=0.2,
    )


# ---------------------------------------------------------------------------
# VTK


def test_vtk_layout_2d(tmp_path):
    mesh = tiny_mesh()
    psi = np.array([0.0, 1.0, 2.0, 3.0])
    u = np.array([0.5, -0.25, 1.0 / 3.0, 0.125])
    path = tmp_path / "snap.vtk"
    write_vtk(path, mesh, {"psi": psi, "u": u}, title="case")
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[1] == "case"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert lines[4] == "POINTS 4 double"
    # z padding for 2D points
    assert lines[5].split() == ["0", "0", "0"]
    i = lines.index("CELLS 2 8")
    assert lines[i + 1] == "3 0 1 2"
    assert lines[i + 2] == "3 0 2 3"
    i = lines.index("CELL_TYPES 2")
    assert lines[i + 1] == "5" and lines[i + 2] == "5"
    i = lines.index("POINT_DATA 4")
    assert lines[i + 1] == "SCALARS psi double 1"
    assert lines[i + 2] == "LOOKUP_TABLE default"
    got_psi = [float(v) for v in lines[i + 3 : i + 7]]
    assert got_psi == psi.tolist()
    assert lines[i + 7] == "SCALARS u double 1"
    got_u = [float(v) for v in lines[i + 9 : i + 13]]
    assert got_u == u.tolist()  # 17 digits round-trip doubles exactly


def test_vtk_tet_cell_type(tmp_path):
    path = tmp_path / "tet.vtk"
    write_vtk(path, tet_mesh(), {})
    text = path.read_text()
    assert "CELLS 1 5" in text
    assert "CELL_TYPES 1\n10" in text
    assert "POINT_DATA" not in text  # no fields requested


def test_vtk_rejects_bad_field_length(tmp_path):
    with pytest.raises(ValueError, match="one value per node"):
        write_vtk(tmp_path / "bad.vtk", tiny_mesh(), {"psi": np.zeros(3)})


def test_vtk_deterministic_bytes(tmp_path):
    mesh = tiny_mesh()
    data = {"psi": np.array([0.1, 0.2, 0.3, 0.4])}
    write_vtk(tmp_path / "a.vtk", mesh, data)
    write_vtk(tmp_path / "b.vtk", mesh, data)
    assert (tmp_path / "a.vtk").read_bytes() == (tmp_path / "b.vtk").read_bytes()


# ---------------------------------------------------------------------------
# error CSV


def test_error_csv_roundtrip(tmp_path):
    report = synthetic_report()
    path = tmp_path / "errors.csv"
    write_error_csv(path, report)
    table = read_error_csv(path)
    assert list(table) == ERROR_COLUMNS
    assert table["step"].dtype == np.int64
    assert np.array_equal(table["step"], report.steps)
    assert np.array_equal(table["t"], report.times)  # %.17g is lossless
    assert np.array_equal(table["rel_err_psi"], report.rel_err_psi)
    assert np.array_equal(table["ref_u_l2"], report.ref_u)


def test_error_csv_uses_unix_newlines(tmp_path):
    path = tmp_path / "errors.csv"
    write_error_csv(path, synthetic_report())
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.split(b"\n")[0].decode() == ",".join(ERROR_COLUMNS)


def test_error_csv_deterministic(tmp_path):
    report = synthetic_report()
    write_error_csv(tmp_path / "a.csv", report)
    write_error_csv(tmp_path / "b.csv", report)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_read_error_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("step,t\n0,0\n")
    with pytest.raises(ValueError, match="unexpected columns"):
        read_error_csv(path)


def test_read_error_csv_rejects_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_error_csv(path)
    path.write_text(",".join(ERROR_COLUMNS) + "\n")
    with pytest.raises(ValueError, match="empty"):
        read_error_csv(path)


# ---------------------------------------------------------------------------
# angle CSV


def test_angle_csv_layout(tmp_path):
    mesh = tiny_mesh()
    element_ids = np.array([0, 1])
    snapshots = [
        (0, 0.0, np.array([0.0, 0.0]), np.array([False, False])),
        (2, 1.5e-6, np.array([10.0, 45.0]), np.array([False, True])),
    ]
    path = tmp_path / "angles.csv"
    write_angle_csv(path, mesh, element_ids, snapshots)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,t,element,x,y,theta_deg,enabled"
    assert len(lines) == 1 + 2 * 2
    last = lines[-1].split(",")
    assert last[0] == "2"
    assert float(last[1]) == 1.5e-6
    assert last[2] == "1"
    # centroid of triangle (0, 2, 3)
    assert float(last[3]) == pytest.approx(1.0 / 3.0)
    assert float(last[4]) == pytest.approx(2.0 / 3.0)
    assert float(last[5]) == 45.0
    assert last[6] == "1"
