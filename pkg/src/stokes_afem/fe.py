"""Lowest-order Raviart-Thomas / piecewise-constant element machinery.

The pseudostress is a 2x2 tensor whose two rows each live in RT0. On a
triangle with vertices p_0, p_1, p_2 the local basis attached to edge e_i
(opposite p_i) is

    phi_i(x) = s_i * |e_i| / (2 |T|) * (x - p_i),

with s_i = +1 when the outward normal of T on e_i matches the global edge
normal. Its normal flux through e_i integrates to s_i |e_i| and
div phi_i = s_i |e_i| / |T|. The coefficient attached to an edge is hence
the mean normal flux across that edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle {x, y >= 0, x + y <= 1}."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def barycentric(self):
        x, y = self.points.T
        return np.column_stack([1 - x - y, x, y])


def quadrature_rule(degree):
    """Quadrature rule exact for polynomials up to ``degree`` (1..6)."""
    degree = int(degree)
    if degree == 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1)
    if degree == 2:
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        return QuadratureRule(pts, np.full(3, 1 / 6), 2)
    if 3 <= degree <= 6:
        # collapsed (Duffy) tensor product of Gauss-Jacobi and Gauss-Legendre
        n = math.ceil((degree + 1) / 2)
        tj, wj = roots_jacobi(n, 1.0, 0.0)
        tl, wl = np.polynomial.legendre.leggauss(n)
        u, wu = (1 + tj) / 2, wj / 4
        v, wv = (1 + tl) / 2, wl / 2
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv)
        pts = np.column_stack([U.ravel(), (V * (1 - U)).ravel()])
        return QuadratureRule(pts, W.ravel(), degree)
    raise ValueError(f"unsupported quadrature degree {degree}; expected 1..6")


def gauss_unit(n):
    """Gauss-Legendre nodes/weights on [0, 1] (weights sum to 1)."""
    t, w = np.polynomial.legendre.leggauss(n)
    return (1 + t) / 2, w / 2


def map_points(mesh, rule):
    """Physical quadrature points (nt, nq, 2) and weights (nt, nq)."""
    p = mesh.vertices[mesh.triangles]
    xi = rule.points
    x = p[:, None, 0] + xi[None, :, 0, None] * (p[:, None, 1] - p[:, None, 0]) + xi[
        None, :, 1, None
    ] * (p[:, None, 2] - p[:, None, 0])
    w = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
    return x, w


def edge_points(mesh, n):
    """Gauss points (ne, n, 2) along every edge and weights (ne, n) summing to |e|."""
    t, w = gauss_unit(n)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    x = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return x, mesh.edge_lengths[:, None] * w[None, :]


@dataclass(frozen=True)
class DofMap:
    """Global numbering of the discrete unknowns.

    Block order is pseudostress (row 0 edges, row 1 edges), pressure (one per
    triangle), velocity (two per triangle, interleaved) and the scalar
    multiplier enforcing a zero mean trace.
    """

    n_edges: int
    n_triangles: int
    sigma: np.ndarray  # (nt, 2, 3) global pseudostress dofs per row / local edge
    signs: np.ndarray  # (nt, 3)

    @property
    def n_sigma(self):
        return 2 * self.n_edges

    @property
    def n_p(self):
        return self.n_triangles

    @property
    def n_u(self):
        return 2 * self.n_triangles

    @property
    def n_total(self):
        return self.n_sigma + self.n_p + self.n_u + 1

    def layout(self, scheme="full"):
        """Block offsets ``{"sigma", "p", "u", "multiplier", "size"}``.

        The reduced scheme has no pressure block (``p`` is None).
        """
        if scheme == "full":
            p0 = self.n_sigma
            u0 = p0 + self.n_p
        elif scheme == "reduced":
            p0 = None
            u0 = self.n_sigma
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        lam = u0 + self.n_u
        return {"sigma": 0, "p": p0, "u": u0, "multiplier": lam, "size": lam + 1}


def build_dofmap(mesh):
    rows = np.arange(2)[None, :, None] * mesh.n_edges
    sigma = rows + mesh.tri_edges[:, None, :]
    return DofMap(mesh.n_edges, mesh.n_triangles, sigma, np.asarray(mesh.edge_signs))


def rt0_scales(mesh):
    """Per-element factors s_i |e_i| / (2|T|), shape (nt, 3)."""
    return mesh.edge_signs * mesh.edge_lengths[mesh.tri_edges] / (2 * mesh.areas()[:, None])


def rt0_eval(mesh, tri, x, tol=1e-12):
    """Evaluate the three local basis functions of triangle ``tri`` at ``x``.

    Returns
    -------
    values : ndarray, shape (3, 2)
    divergences : ndarray, shape (3,)
    """
    x = np.asarray(x, float)
    p = mesh.vertices[mesh.triangles[tri]]
    area = mesh.areas()[tri]
    lam = []
    for i in range(3):
        a, b = p[(i + 1) % 3], p[(i + 2) % 3]
        lam.append(((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / (2 * area))
    if min(lam) < -tol:
        raise ValueError(f"point {x.tolist()} lies outside triangle {tri}")
    scale = rt0_scales(mesh)[tri]
    values = scale[:, None] * (x[None, :] - p)
    return values, 2.0 * scale


def rt0_affine(mesh, sigma_coeffs):
    """Affine form of a discrete pseudostress.

    Row r of sigma on T equals ``alpha[T, r] + beta[T, r] * x``.

    Returns
    -------
    alpha : ndarray, shape (nt, 2, 2)
    beta : ndarray, shape (nt, 2)
    """
    c = np.asarray(sigma_coeffs, float).reshape(2, mesh.n_edges)
    w = c[:, mesh.tri_edges].transpose(1, 0, 2) * rt0_scales(mesh)[:, None, :]  # (nt,2,3)
    p = mesh.vertices[mesh.triangles]  # (nt,3,2)
    beta = w.sum(axis=2)
    alpha = -np.einsum("tri,tik->trk", w, p)
    return alpha, beta


def eval_affine(alpha, beta, x):
    """Tensor values (nt, nq, 2, 2) of an affine field at points x (nt, nq, 2)."""
    return alpha[:, None, :, :] + beta[:, None, :, None] * x[:, :, None, :]


def interpolate_rt0(mesh, f, n_gauss=4):
    """Raviart-Thomas interpolant of a tensor field.

    Parameters
    ----------
    f : callable
        Maps points of shape (m, 2) to tensors of shape (m, 2, 2).

    Returns
    -------
    ndarray, shape (2 * n_edges,)
        Row-major edge coefficients (mean normal flux per row and edge).
    """
    x, w = edge_points(mesh, n_gauss)
    ne, nq = w.shape
    vals = np.asarray(f(x.reshape(-1, 2)), float).reshape(ne, nq, 2, 2)
    flux = np.einsum("eqrk,ek->eqr", vals, mesh.normals)
    mean = np.einsum("eqr,eq->re", flux, w) / mesh.edge_lengths[None, :]
    return mean.ravel()


def project_p0(mesh, g, degree=4):
    """Elementwise mean values of ``g`` (points (m, 2) -> (m,) or (m, k))."""
    x, w = map_points(mesh, quadrature_rule(degree))
    nt, nq = w.shape
    vals = np.asarray(g(x.reshape(-1, 2)), float)
    vals = vals.reshape(nt, nq, *vals.shape[1:])
    integral = np.einsum("tq,tq...->t...", w, vals)
    return integral / mesh.areas().reshape((-1,) + (1,) * (integral.ndim - 1))
