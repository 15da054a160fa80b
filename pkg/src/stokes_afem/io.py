"""File formats: CSV convergence tables, legacy VTK, MSH 2.2 and MatrixMarket.

All writers produce deterministic byte streams (fixed float formatting,
LF line endings, no timestamps).
"""
from __future__ import annotations

import csv
import os

import numpy as np
import scipy.io

from .mesh import Mesh, relabel_longest_edge

CSV_COLUMNS = ("iter", "N", "lambda_h1", "err", "estimator_sq", "effectivity", "elements", "seconds")


class MshFormatError(ValueError):
    """Raised for MSH input outside the supported 2.2 ASCII subset."""


def _sci(x):
    return f"{float(x):.5e}"


def format_csv_row(row):
    return ",".join(
        [
            str(int(row.iter)),
            str(int(row.N)),
            _sci(row.lambda_h1),
            _sci(row.err),
            _sci(row.estimator_sq),
            _sci(row.effectivity),
            str(int(row.elements)),
            _sci(row.seconds),
        ]
    )


class CsvStream:
    """Append-and-flush CSV writer so partial campaigns survive a crash."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")
        self._fh.flush()

    def __call__(self, row):
        self._fh.write(format_csv_row(row) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv_table(table, path):
    """Write a whole :class:`ConvergenceTable` (or list of rows)."""
    rows = getattr(table, "rows", table)
    if not len(rows):
        raise ValueError("refusing to write an empty convergence table")
    text = ",".join(CSV_COLUMNS) + "\n" + "".join(format_csv_row(r) + "\n" for r in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_csv_table(path):
    """Rows of a table file as dicts of ints/floats."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        out = []
        for rec in reader:
            out.append(
                {k: (int(v) if k in ("iter", "N", "elements") else float(v)) for k, v in rec.items()}
            )
    return out


def _fmt(x):
    return f"{float(x):.16e}"


def write_vtk(mesh, path, cell_data=None, point_data=None, title="stokes_afem"):
    """Legacy ASCII VTK 2.0 unstructured grid of triangles (cell type 5).

    Arrays of shape (n,) are written as SCALARS, arrays of shape (n, 2) as
    VECTORS with a zero third component.
    """
    cell_data = dict(cell_data or {})
    point_data = dict(point_data or {})
    nv, nt = mesh.n_vertices, mesh.n_triangles
    for kind, data, n in (("cell", cell_data, nt), ("point", point_data, nv)):
        for name, arr in data.items():
            a = np.asarray(arr)
            if a.shape[0] != n or a.ndim > 2 or (a.ndim == 2 and a.shape[1] != 2):
                raise ValueError(f"{kind} field {name!r} has shape {a.shape}, expected ({n},) or ({n}, 2)")
            if " " in name:
                raise ValueError(f"field name {name!r} contains a space")
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines += [f"{_fmt(x)} {_fmt(y)} {_fmt(0.0)}" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt

    def block(header, n, data):
        if not data:
            return
        lines.append(f"{header} {n}")
        for name, arr in data.items():
            a = np.asarray(arr, float)
            if a.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v) for v in a)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{_fmt(x)} {_fmt(y)} {_fmt(0.0)}" for x, y in a)

    block("CELL_DATA", nt, cell_data)
    block("POINT_DATA", nv, point_data)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def export_mesh(mesh, path):
    """Write vertices, triangles and boundary edges in MSH 2.2 ASCII."""
    be = mesh.edges[mesh.boundary]
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    lines += [f"{i + 1} {_fmt(x)} {_fmt(y)} 0" for i, (x, y) in enumerate(mesh.vertices)]
    lines += ["$EndNodes", "$Elements", str(len(be) + mesh.n_triangles)]
    k = 1
    for a, b in be:
        lines.append(f"{k} 1 2 1 1 {a + 1} {b + 1}")
        k += 1
    for a, b, c in mesh.triangles:
        lines.append(f"{k} 2 2 2 1 {a + 1} {b + 1} {c + 1}")
        k += 1
    lines.append("$EndElements")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def import_mesh(path, relabel=False):
    """Read an MSH 2.2 ASCII file.

    Supports line (1), triangle (2) and point (15) elements; points are
    ignored. Clockwise triangles are flipped. With ``relabel`` every
    triangle gets its longest edge as refinement edge.

    Returns
    -------
    mesh : Mesh
    boundary_lines : ndarray, shape (m, 2)
        0-based vertex pairs of the line elements.
    """
    with open(path, encoding="utf-8") as fh:
        tokens = [ln.strip() for ln in fh if ln.strip()]
    try:
        i = tokens.index("$MeshFormat")
    except ValueError:
        raise MshFormatError("missing $MeshFormat section") from None
    head = tokens[i + 1].split()
    if head[0] not in ("2.2", "2.1", "2") or head[1] != "0":
        raise MshFormatError(f"unsupported MSH version {tokens[i + 1]!r}; need 2.2 ASCII")
    try:
        n0 = tokens.index("$Nodes")
        e0 = tokens.index("$Elements")
    except ValueError:
        raise MshFormatError("missing $Nodes or $Elements section") from None
    nn = int(tokens[n0 + 1])
    ids = {}
    coords = np.zeros((nn, 2))
    for k in range(nn):
        parts = tokens[n0 + 2 + k].split()
        ids[int(parts[0])] = k
        coords[k] = float(parts[1]), float(parts[2])
    ne = int(tokens[e0 + 1])
    tris, lines = [], []
    for k in range(ne):
        parts = [int(v) for v in tokens[e0 + 2 + k].split()]
        etype, ntags = parts[1], parts[2]
        nodes = [ids[v] for v in parts[3 + ntags :]]
        if etype == 2:
            tris.append(nodes)
        elif etype == 1:
            lines.append(nodes)
        elif etype == 15:
            continue
        else:
            raise MshFormatError(f"unsupported element type {etype} (element {parts[0]})")
    tris = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if relabel:
        tris = relabel_longest_edge(coords, tris)
    else:
        p = coords[tris]
        cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 1, 1] - p[:, 0, 1]
        ) * (p[:, 2, 0] - p[:, 0, 0])
        tris[cross < 0] = tris[cross < 0][:, [1, 0, 2]]
    return Mesh(coords, tris), np.array(lines, dtype=np.int64).reshape(-1, 2)


def write_matrix_market(matrix, path, comment=""):
    """Dump a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(path, matrix, comment=comment)
