"""Residual error indicators for the mixed Stokes eigenproblem.

For a discrete eigenpair (lambda_h, sigma_h, [p_h], u_h) the reduced
indicator on a triangle T is

    theta_T^2 = ||Theta u_h - u_h||_T^2
              + h_T^2 ||curl(sigma_h^d / 2mu)||_T^2
              + h_T^2 ||grad u_h - sigma_h^d / 2mu||_T^2
              + sum_{e in E(T), interior} h_e ||[sigma_h^d / 2mu] t_e||_e^2
              + sum_{e in E(T), boundary} h_e ||sigma_h^d / 2mu t_e||_e^2

and the full indicator adds the same kind of residuals for
q_h = p_h + tr(sigma_h)/2 (as the tensor q_h I). Theta is the vertex-patch
average that lifts u_h to a continuous piecewise linear field. Edge terms
enter every element that contains the edge at full weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fe import edge_points, eval_affine, map_points, quadrature_rule, rt0_affine

EDGE_GAUSS = 2


@dataclass
class SpectralSolution:
    """Discrete eigenpair split into its fields; ``p`` is None for the reduced scheme."""

    eigenvalue: float
    sigma: np.ndarray
    p: np.ndarray | None
    u: np.ndarray
    mu: float = 0.5
    scheme: str = "full"

    @classmethod
    def from_vector(cls, mesh, system, eigenvalue, x, normalize=True):
        lay = system.layout
        x = np.asarray(x, float)
        sigma = x[lay["sigma"] : lay["sigma"] + 2 * mesh.n_edges].copy()
        p = None
        if lay["p"] is not None:
            p = x[lay["p"] : lay["p"] + mesh.n_triangles].copy()
        u = x[lay["u"] : lay["u"] + 2 * mesh.n_triangles].reshape(-1, 2).copy()
        sol = cls(float(eigenvalue), sigma, p, u, system.mu, system.scheme)
        if normalize:
            sol = sol.scaled(1.0 / sol.velocity_norm(mesh))
        return sol

    def velocity_norm(self, mesh):
        return float(np.sqrt((mesh.areas() * (self.u**2).sum(axis=1)).sum()))

    def trace_integral(self, mesh):
        """int_Omega tr(sigma_h), zero for a solution of the constrained problem."""
        x, w = map_points(mesh, quadrature_rule(1))
        alpha, beta = rt0_affine(mesh, self.sigma)
        s = eval_affine(alpha, beta, x)
        return float((w * (s[..., 0, 0] + s[..., 1, 1])).sum())

    def scaled(self, c):
        return SpectralSolution(
            self.eigenvalue,
            c * self.sigma,
            None if self.p is None else c * self.p,
            c * self.u,
            self.mu,
            self.scheme,
        )


@dataclass
class IndicatorField:
    """Squared local indicators plus their per-term breakdown."""

    local: np.ndarray
    terms: dict = field(default_factory=dict)
    name: str = "theta"

    @property
    def global_sq(self):
        return float(self.local.sum())

    @property
    def global_value(self):
        return float(np.sqrt(self.global_sq))

    @property
    def beta(self):
        """Unsquared local indicators, the quantity used for marking."""
        return np.sqrt(self.local)


def postprocess_velocity(mesh, geometry, u):
    """Vertex values (n_vertices, 2) of the patch-averaged velocity."""
    u = np.asarray(u, float).reshape(mesh.n_triangles, -1)
    flat = mesh.triangles.ravel()
    weighted = np.repeat(geometry.areas[:, None] * u, 3, axis=0)
    out = np.column_stack(
        [np.bincount(flat, weights=weighted[:, k], minlength=mesh.n_vertices) for k in range(u.shape[1])]
    )
    return out / geometry.patch_areas[:, None]


def _deviator(s):
    tr = s[..., 0, 0] + s[..., 1, 1]
    return s - 0.5 * tr[..., None, None] * np.eye(2)


def _edge_sides(mesh, alpha, beta, fn):
    """Evaluate ``fn`` of the affine data from both sides of every edge.

    ``fn(alpha, beta, x, sel)`` receives the data of the edges selected by
    ``sel``. Returns values on side 0 and side 1 at the edge Gauss points
    plus the weights; side 1 is zero on boundary edges.
    """
    x, w = edge_points(mesh, EDGE_GAUSS)
    t0 = mesh.edge_triangles[:, 0]
    t1 = mesh.edge_triangles[:, 1]
    v0 = fn(alpha[t0], beta[t0], x, slice(None))
    v1 = np.zeros_like(v0)
    inner = t1 >= 0
    v1[inner] = fn(alpha[t1[inner]], beta[t1[inner]], x[inner], inner)
    return v0, v1, w


def _distribute(mesh, per_edge, mask):
    """Add each edge value to every triangle containing that edge."""
    vals = np.where(mask, per_edge, 0.0)
    return vals[mesh.tri_edges].sum(axis=1)


def deviatoric_curl(beta):
    """Row curls (nt, 2) of the deviatoric part of affine RT0 data.

    With rows alpha_r + beta_r x one has d_k sigma^d_{rl} = beta_r delta_lk
    - beta_k delta_rl / 2, so the rows give (beta_1 / 2, -beta_0 / 2).
    """
    eye = np.eye(2)
    grad = beta[:, :, None, None] * eye[None, None, :, :] - 0.5 * beta[:, None, None, :] * eye[None, :, :, None]
    return grad[:, :, 1, 0] - grad[:, :, 0, 1]  # d_x s_r1 - d_y s_r0


def tangential_edge_terms(mesh, alpha, beta, mu):
    """Per-edge h_e ||[sigma^d / 2mu] t_e||_e^2 (plain trace on boundary edges).

    Each edge is evaluated once; callers distribute the value to both sides.
    """

    def tangential(a, b, xe, sel):
        return np.einsum("eqkl,el->eqk", _deviator(eval_affine(a, b, xe)), mesh.tangents[sel]) / (2 * mu)

    v0, v1, we = _edge_sides(mesh, alpha, beta, tangential)
    return mesh.edge_lengths * (we * ((v0 - v1) ** 2).sum(axis=2)).sum(axis=1)


def compute_theta(mesh, geometry, solution):
    """Reduced-scheme indicator field (valid for either scheme's solution)."""
    if solution.sigma.shape[0] != 2 * mesh.n_edges or solution.u.shape[0] != mesh.n_triangles:
        raise ValueError("solution does not belong to this mesh")
    mu2 = 2.0 * solution.mu
    areas = geometry.areas
    h_t = geometry.diameters
    alpha, beta = rt0_affine(mesh, solution.sigma)
    x, w = map_points(mesh, quadrature_rule(2))

    # ||Theta u_h - u_h||^2 with the P1 lift evaluated through barycentric weights
    vert = postprocess_velocity(mesh, geometry, solution.u)
    bary = quadrature_rule(2).barycentric
    lifted = np.einsum("qj,tjk->tqk", bary, vert[mesh.triangles])
    diff = lifted - solution.u[:, None, :]
    post = (w * (diff**2).sum(axis=2)).sum(axis=1)

    curl = deviatoric_curl(beta) / mu2
    curl_term = h_t**2 * areas * (curl**2).sum(axis=1)

    dev = _deviator(eval_affine(alpha, beta, x)) / mu2
    grad_u = np.zeros_like(dev)  # piecewise-constant velocity
    grad_term = h_t**2 * (w * ((grad_u - dev) ** 2).sum(axis=(2, 3))).sum(axis=1)

    per_edge = tangential_edge_terms(mesh, alpha, beta, solution.mu)
    jump = _distribute(mesh, per_edge, ~mesh.boundary)
    bnd = _distribute(mesh, per_edge, mesh.boundary)

    terms = {
        "postprocess": post,
        "curl": curl_term,
        "gradient": grad_term,
        "jump": jump,
        "boundary": bnd,
    }
    return IndicatorField(sum(terms.values()), terms, "theta")


def pressure_residual_terms(mesh, geometry, solution):
    """Element terms of q_h = p_h + tr(sigma_h)/2 used by the full indicator."""
    if solution.p is None:
        raise ValueError("the full indicator needs a pressure (full-scheme solution)")
    areas = geometry.areas
    h_t = geometry.diameters
    alpha, beta = rt0_affine(mesh, solution.sigma)
    # q(x) = q0 + g . x
    q0 = solution.p + 0.5 * (alpha[:, 0, 0] + alpha[:, 1, 1])
    g = 0.5 * beta
    x, w = map_points(mesh, quadrature_rule(2))
    qv = q0[:, None] + np.einsum("tqk,tk->tq", x, g)
    l2 = (w * qv**2).sum(axis=1)
    # curl(q I) has rows (-d_y q, d_x q)
    curl_term = h_t**2 * areas * (g**2).sum(axis=1)

    xe, we = edge_points(mesh, EDGE_GAUSS)
    t0 = mesh.edge_triangles[:, 0]
    t1 = mesh.edge_triangles[:, 1]
    q_0 = q0[t0][:, None] + np.einsum("eqk,ek->eq", xe, g[t0])
    q_1 = np.zeros_like(q_0)
    inner = t1 >= 0
    q_1[inner] = q0[t1[inner]][:, None] + np.einsum("eqk,ek->eq", xe[inner], g[t1[inner]])
    # |t_e| = 1, so ||(q_T - q_T') t_e||^2 = |q_T - q_T'|^2
    per_edge = mesh.edge_lengths * (we * (q_0 - q_1) ** 2).sum(axis=1)
    return {
        "pressure": l2,
        "pressure_curl": curl_term,
        "pressure_jump": _distribute(mesh, per_edge, ~mesh.boundary),
        "pressure_boundary": _distribute(mesh, per_edge, mesh.boundary),
    }


def compute_eta(mesh, geometry, solution, theta=None):
    """Full-scheme indicator field eta_T^2 = theta_T^2 + pressure residuals."""
    extra = pressure_residual_terms(mesh, geometry, solution)
    if theta is None:
        theta = compute_theta(mesh, geometry, solution)
    terms = dict(theta.terms)
    terms.update(extra)
    return IndicatorField(theta.local + sum(extra.values()), terms, "eta")
