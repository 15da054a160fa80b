import json
from pathlib import Path

import numpy as np
import pytest
import scipy.io

from stokes_afem.adaptivity import ConvergenceTable, IterationRecord
from stokes_afem.assembly import assemble
from stokes_afem.config import ConfigError, parse_config
from stokes_afem.io import (
    CSV_COLUMNS,
    CsvStream,
    MshFormatError,
    export_mesh,
    format_csv_row,
    import_mesh,
    read_csv_table,
    write_csv_table,
    write_matrix_market,
    write_vtk,
)
from stokes_afem.mesh import bisect_marked, generate_domain

DATA = Path(__file__).parent / "data"


def row(i=0, N=709):
    return IterationRecord(i, N, 57.92345, 2.18027e01, 1.71691e02, 1.26988e-01, 112, 0.5)


def test_csv_row_format():
    text = format_csv_row(row())
    assert text == "0,709,5.79235e+01,2.18027e+01,1.71691e+02,1.26988e-01,112,5.00000e-01"


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "t.csv"
    t = ConvergenceTable([row()])
    write_csv_table(t, p)
    raw = p.read_bytes()
    assert raw.startswith(b"iter,N,lambda_h1,err,estimator_sq,effectivity,elements,seconds\n")
    assert b"\r" not in raw
    back = read_csv_table(p)
    assert back == [
        {"iter": 0, "N": 709, "lambda_h1": 57.9235, "err": 21.8027, "estimator_sq": 171.691,
         "effectivity": 0.126988, "elements": 112, "seconds": 0.5}
    ]
    # rewriting what was read gives the same bytes
    write_csv_table([IterationRecord(**back[0])], tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_bytes() == raw


def test_csv_empty_table_creates_no_file(tmp_path):
    p = tmp_path / "empty.csv"
    with pytest.raises(ValueError):
        write_csv_table(ConvergenceTable(), p)
    assert not p.exists()


def test_csv_stream_flushes_each_row(tmp_path):
    p = tmp_path / "s.csv"
    with CsvStream(p) as s:
        s(row(0, 10))
        assert len(p.read_text().splitlines()) == 2
        s(row(1, 20))
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 3


def test_vtk_matches_golden_file(tmp_path):
    m = generate_domain("square", 1)
    p = tmp_path / "two.vtk"
    write_vtk(
        m,
        p,
        {"indicator_sq": np.array([0.25, 1.5]), "u_h": np.array([[1.0, -0.5], [0.0, 2.0]])},
        {"Theta_u_h": np.array([[0.5, 0.75], [1.0, -0.5], [0.0, 2.0], [0.5, 0.75]])},
    )
    assert p.read_bytes() == (DATA / "two_triangles.vtk").read_bytes()


def test_vtk_structure_and_size_checks(tmp_path):
    m = generate_domain("lshape", 2)
    p = tmp_path / "l.vtk"
    write_vtk(m, p, {"eta": np.ones(m.n_triangles)})
    lines = p.read_text().splitlines()
    assert f"POINTS {m.n_vertices} double" in lines
    assert f"CELLS {m.n_triangles} {4 * m.n_triangles}" in lines
    i = lines.index(f"CELL_TYPES {m.n_triangles}")
    assert set(lines[i + 1 : i + 1 + m.n_triangles]) == {"5"}
    j = lines.index("SCALARS eta double 1")
    assert len(lines[j + 2 :]) == m.n_triangles
    with pytest.raises(ValueError):
        write_vtk(m, p, {"bad": np.ones(m.n_triangles + 1)})
    with pytest.raises(ValueError):
        write_vtk(m, p, point_data={"bad": np.ones((m.n_vertices, 3))})


def test_msh_roundtrip(tmp_path):
    m = bisect_marked(generate_domain("tshape", 6), [0, 17, 40])
    p = tmp_path / "m.msh"
    export_mesh(m, p)
    back, lines = import_mesh(p)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    assert {tuple(sorted(e)) for e in lines} == {tuple(e) for e in m.edges[m.boundary]}


def test_msh_one_based_indices(tmp_path):
    p = tmp_path / "tri.msh"
    p.write_text(
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n3\n"
        "10 0 0 0\n20 1 0 0\n30 0 1 0\n$EndNodes\n"
        "$Elements\n2\n1 15 2 0 1 10\n2 2 2 0 1 30 20 10\n$EndElements\n"
    )
    m, lines = import_mesh(p)
    assert m.n_triangles == 1 and lines.shape == (0, 2)
    assert set(m.triangles[0]) == {0, 1, 2}
    assert m.areas()[0] == pytest.approx(0.5)  # clockwise input was flipped


def test_msh_unsupported_input(tmp_path):
    quad = tmp_path / "q.msh"
    quad.write_text(
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n"
        "$EndNodes\n$Elements\n1\n1 3 2 0 1 1 2 3 4\n$EndElements\n"
    )
    with pytest.raises(MshFormatError, match="element type 3"):
        import_mesh(quad)
    v4 = tmp_path / "v4.msh"
    v4.write_text("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n")
    with pytest.raises(MshFormatError, match="version"):
        import_mesh(v4)


def test_matrix_market_dump(tmp_path):
    s = assemble(generate_domain("square", 1))
    p = tmp_path / "K.mtx"
    write_matrix_market(s.K, p)
    back = scipy.io.mmread(p)
    np.testing.assert_array_equal(back.toarray(), s.K.toarray())


def test_parse_config_defaults_and_precedence(tmp_path):
    cfg = parse_config(overrides={"domain": "tshape"})
    assert (cfg.scheme, cfg.estimator, cfg.mu, cfg.refinement) == ("full", "eta", 0.5, "adaptive")
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"domain": "lshape", "max_iterations": 20}))
    assert parse_config(p).max_iterations == 20
    assert parse_config(p, {"max_iterations": 15, "mu": None}).max_iterations == 15


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="estimator"):
        parse_config(overrides={"scheme": "reduced", "estimator": "eta"})
    with pytest.raises(ConfigError, match="colour"):
        parse_config(overrides={"colour": "red"})
    with pytest.raises(ConfigError, match="max_iterations"):
        parse_config(overrides={"max_iterations": "ten"})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config(arr)
