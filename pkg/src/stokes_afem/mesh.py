"""Conforming triangle meshes: generation, refinement and geometric queries.

Triangles are stored counterclockwise with a fixed local labelling that
doubles as the newest-vertex bookkeeping::

    triangle = (v0, v1, v2)   refinement edge = (v0, v1), newest vertex = v2

Local edge ``i`` is the edge opposite local vertex ``i``, so the refinement
edge is always local edge 2.

Example
-------
>>> from stokes_afem.mesh import generate_domain, bisect_marked
>>> mesh = generate_domain("lshape", 2)
>>> fine = bisect_marked(mesh, [0, 5])
>>> fine.n_triangles > mesh.n_triangles
True
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

DOMAIN_AREAS = {"square": 1.0, "lshape": 3.0, "tshape": 2.0}
DOMAINS = tuple(DOMAIN_AREAS)


class MeshError(ValueError):
    """Raised for invalid meshes or refinement requests."""


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable conforming 2D triangulation with derived edge topology.

    Parameters
    ----------
    vertices : array_like, shape (n_vertices, 2)
    triangles : array_like, shape (n_triangles, 3)
        Counterclockwise vertex indices; local edge 2 is the refinement edge.
    generation : int
        Number of refinement steps that produced this mesh.
    parents : array_like, optional
        Index of the parent triangle in the previous generation (-1 if none).
    """

    def __init__(self, vertices, triangles, generation=0, parents=None):
        self.vertices = _frozen(vertices, float)
        self.triangles = _frozen(triangles, np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (m, 3)")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise MeshError("triangle references a nonexistent vertex")
        self.generation = int(generation)
        if parents is None:
            parents = np.full(len(self.triangles), -1)
        self.parents = _frozen(parents, np.int64)

        if np.any(self.signed_areas() <= 0.0):
            bad = int(np.flatnonzero(self.signed_areas() <= 0.0)[0])
            raise MeshError(f"triangle {bad} is degenerate or clockwise")
        self._build_edges()

    # -- topology ---------------------------------------------------------
    def _build_edges(self):
        t = self.triangles
        nv = len(self.vertices)
        # local edge i is opposite local vertex i
        a = t[:, [1, 2, 0]].ravel()
        b = t[:, [2, 0, 1]].ravel()
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * nv + hi
        uniq, inverse = np.unique(keys, return_inverse=True)
        edges = np.column_stack([uniq // nv, uniq % nv])
        tri_edges = inverse.reshape(-1, 3)

        counts = np.bincount(inverse, minlength=len(uniq))
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        order = np.argsort(inverse, kind="stable")
        owner = np.repeat(np.arange(len(t)), 3)[order]
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_tris = np.full((len(uniq), 2), -1, dtype=np.int64)
        edge_tris[:, 0] = owner[start]
        two = counts == 2
        edge_tris[two, 1] = owner[start[two] + 1]

        self.edges = _frozen(edges, np.int64)
        self.tri_edges = _frozen(tri_edges, np.int64)
        self.edge_triangles = _frozen(edge_tris, np.int64)
        self.boundary = _frozen(counts == 1, bool)
        # +1 where the local edge runs from the lower to the higher vertex
        # index, i.e. the outward normal agrees with the global edge normal
        self.edge_signs = _frozen(np.where(a < b, 1.0, -1.0).reshape(-1, 3), float)

        d = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        tangent = d / length[:, None]
        self.edge_lengths = _frozen(length, float)
        self.tangents = _frozen(tangent, float)
        self.normals = _frozen(np.column_stack([tangent[:, 1], -tangent[:, 0]]), float)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def refinement_vertex(self):
        """Newest vertex of every triangle (opposite its refinement edge)."""
        return self.triangles[:, 2]

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def areas(self):
        return self.signed_areas()

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def diameters(self):
        """Longest edge length of every triangle."""
        return self.edge_lengths[self.tri_edges].max(axis=1)

    def total_area(self):
        return float(self.areas().sum())

    def boundary_length(self):
        return float(self.edge_lengths[self.boundary].sum())

    def min_angles(self):
        """Smallest interior angle of every triangle, in radians."""
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cos = (u * v).sum(1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return np.min(angles, axis=0)

    def hanging_vertices(self, rtol=1e-10):
        """Vertices lying strictly inside some edge (empty for conforming meshes)."""
        tree = cKDTree(self.vertices)
        p0 = self.vertices[self.edges[:, 0]]
        p1 = self.vertices[self.edges[:, 1]]
        mid = 0.5 * (p0 + p1)
        hanging = set()
        for e, cand in enumerate(tree.query_ball_point(mid, 0.5 * self.edge_lengths * (1 - rtol))):
            for v in cand:
                if v in self.edges[e]:
                    continue
                d = self.vertices[v] - p0[e]
                t = self.tangents[e]
                off = abs(d[0] * t[1] - d[1] * t[0])
                if off <= rtol * self.edge_lengths[e]:
                    hanging.add(v)
        return sorted(hanging)

    def is_conforming(self):
        interior = ~self.boundary
        ok_counts = np.all(self.edge_triangles[interior, 1] >= 0)
        return bool(ok_counts and not self.hanging_vertices())

    def __repr__(self):
        return (
            f"Mesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles}, "
            f"n_edges={self.n_edges}, generation={self.generation})"
        )


@dataclass(frozen=True)
class GeometryTables:
    """Per-element, per-edge and per-vertex geometric quantities."""

    areas: np.ndarray
    diameters: np.ndarray
    edge_lengths: np.ndarray
    patch_ptr: np.ndarray
    patch_triangles: np.ndarray
    patch_areas: np.ndarray

    def patch(self, z):
        """Triangles incident to vertex ``z``."""
        return self.patch_triangles[self.patch_ptr[z] : self.patch_ptr[z + 1]]


def geometry_tables(mesh):
    areas = mesh.areas()
    if np.any(areas <= 0):
        raise MeshError("degenerate triangle")
    flat = mesh.triangles.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=mesh.n_vertices)
    ptr = np.concatenate([[0], np.cumsum(counts)])
    patch_tris = np.repeat(np.arange(mesh.n_triangles), 3)[order]
    patch_areas = np.bincount(flat, weights=np.repeat(areas, 3), minlength=mesh.n_vertices)
    return GeometryTables(
        areas=areas,
        diameters=mesh.diameters(),
        edge_lengths=mesh.edge_lengths,
        patch_ptr=ptr,
        patch_triangles=patch_tris,
        patch_areas=patch_areas,
    )


def _structured(n0, lo, hi, keep_quad):
    """Split the kept cells of a uniform grid on [lo, hi]^2 along SW-NE diagonals."""
    m = int(round((hi - lo) * n0))
    idx = np.arange(m + 1)
    xs = lo + idx / n0
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    i, j = i.ravel(), j.ravel()
    cx = lo + (i + 0.5) / n0
    cy = lo + (j + 0.5) / n0
    keep = keep_quad(cx, cy)
    i, j = i[keep], j[keep]
    sw = j * (m + 1) + i
    se, nw, ne = sw + 1, sw + m + 1, sw + m + 2
    # diagonal sw-ne is the refinement edge (local vertices 0, 1) of both halves
    lower = np.column_stack([ne, sw, se])
    upper = np.column_stack([sw, ne, nw])
    tris = np.stack([lower, upper], axis=1).reshape(-1, 3)
    used = np.unique(tris)
    remap = np.full(len(verts), -1)
    remap[used] = np.arange(len(used))
    return Mesh(verts[used], remap[tris])


def generate_domain(name, n0):
    """Structured triangulation of one of the test domains.

    Parameters
    ----------
    name : {"square", "lshape", "tshape"}
        ``square`` is (0,1)^2; ``lshape`` is (-1,1)^2 minus (-1,0)^2;
        ``tshape`` is (-1,1)^2 minus the two blocks
        (-1,-1/3)x(-1,1/2) and (1/3,1)x(-1,1/2).
    n0 : int
        Grid cells per unit length. Must be a multiple of 6 for ``tshape``.
    """
    n0 = int(n0)
    if n0 < 1:
        raise MeshError("n0 must be >= 1")
    if name == "square":
        return _structured(n0, 0.0, 1.0, lambda x, y: np.ones_like(x, dtype=bool))
    if name == "lshape":
        return _structured(n0, -1.0, 1.0, lambda x, y: ~((x < 0) & (y < 0)))
    if name == "tshape":
        if n0 % 6:
            raise MeshError("tshape needs n0 divisible by 6 to resolve the corners (+-1/3, 1/2)")
        return _structured(n0, -1.0, 1.0, lambda x, y: ~((np.abs(x) > 1 / 3) & (y < 0.5)))
    raise MeshError(f"unknown domain {name!r}; expected one of {DOMAINS}")


def uniform_refine(mesh):
    """Red refinement: every triangle into four similar children."""
    t = mesh.triangles
    mid = mesh.n_vertices + mesh.tri_edges
    m12, m20, m01 = mid[:, 0], mid[:, 1], mid[:, 2]
    new_verts = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    # each child keeps its refinement edge parallel to the parent's
    children = np.stack(
        [
            np.column_stack([t[:, 0], m01, m20]),
            np.column_stack([m01, t[:, 1], m12]),
            np.column_stack([m20, m12, t[:, 2]]),
            np.column_stack([m12, m20, m01]),
        ],
        axis=1,
    ).reshape(-1, 3)
    parents = np.repeat(np.arange(mesh.n_triangles), 4)
    return Mesh(
        np.vstack([mesh.vertices, new_verts]), children, mesh.generation + 1, parents
    )


def _bisect(tris, mids):
    """Bisect along local edge 2; the midpoint becomes the newest vertex."""
    left = np.column_stack([tris[:, 2], tris[:, 0], mids])
    right = np.column_stack([tris[:, 1], tris[:, 2], mids])
    return left, right


def bisect_marked(mesh, marked, max_closure_iter=None):
    """Newest-vertex bisection of the marked triangles plus conforming closure.

    Every marked triangle is bisected at least once. Neighbours are bisected
    until no hanging node remains; each triangle is split into 2, 3 or 4
    children.
    """
    marked = np.unique(np.asarray(list(marked) if isinstance(marked, set) else marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise MeshError("marked triangle index out of range")

    te = mesh.tri_edges
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[te[marked, 2]] = True
    cap = mesh.n_edges + 1 if max_closure_iter is None else int(max_closure_iter)
    for _ in range(cap):
        need = edge_marked[te].any(axis=1) & ~edge_marked[te[:, 2]]
        if not need.any():
            break
        edge_marked[te[need, 2]] = True
    else:
        raise RuntimeError("bisection closure did not terminate; mesh topology is corrupt")

    ids = np.flatnonzero(edge_marked)
    mid = np.full(mesh.n_edges, -1, dtype=np.int64)
    mid[ids] = mesh.n_vertices + np.arange(len(ids))
    e = mesh.edges[ids]
    new_verts = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])

    split = edge_marked[te[:, 2]]
    keep = np.flatnonzero(~split)
    sp = np.flatnonzero(split)
    left, right = _bisect(mesh.triangles[sp], mid[te[sp, 2]])
    # the children's refinement edges are the parent's untouched edges 1 and 0
    pieces = [mesh.triangles[keep]]
    parents = [keep]
    for child, ref_edge in ((left, te[sp, 1]), (right, te[sp, 0])):
        again = edge_marked[ref_edge]
        pieces.append(child[~again])
        parents.append(sp[~again])
        gl, gr = _bisect(child[again], mid[ref_edge[again]])
        pieces += [gl, gr]
        parents += [sp[again], sp[again]]
    return Mesh(
        np.vstack([mesh.vertices, new_verts]),
        np.vstack(pieces),
        mesh.generation + 1,
        np.concatenate(parents),
    )


def relabel_longest_edge(vertices, triangles):
    """Orient triangles counterclockwise with the longest edge as refinement edge."""
    vertices = np.asarray(vertices, float)
    t = np.array(triangles, dtype=np.int64)
    p = vertices[t]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    t[cross < 0] = t[cross < 0][:, [0, 2, 1]]
    p = vertices[t]
    opp = np.stack(
        [np.linalg.norm(p[:, (i + 2) % 3] - p[:, (i + 1) % 3], axis=1) for i in range(3)],
        axis=1,
    )
    # rotate so the vertex opposite the longest edge sits in slot 2
    k = np.argmax(opp, axis=1)
    rows = np.arange(len(t))[:, None]
    return t[rows, (np.arange(3)[None, :] + k[:, None] + 1) % 3]
