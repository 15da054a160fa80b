"""Sparse saddle-point matrices of the discrete Stokes eigenproblem.

With unknowns X = (sigma, p, u, rho) the full scheme reads

    [A_ss  A_sp  B^T  c] [sigma]            [   0   ]
    [A_ps  A_pp   0   0] [  p  ]  = lambda  [   0   ]
    [ B     0     0   0] [  u  ]            [ -M u  ]
    [c^T    0     0   0] [ rho ]            [   0   ]

where rho multiplies the constraint int tr(sigma) = 0. The reduced scheme
drops the pressure row/column and uses the deviatoric form only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fe import build_dofmap, map_points, quadrature_rule, rt0_scales
from .linalg import csr_from_triplets

DIM = 2


@dataclass
class AssembledSystem:
    K: sp.csr_matrix
    M: sp.dia_matrix
    layout: dict
    mu: float
    scheme: str
    surrogate: np.ndarray = None

    @property
    def border(self):
        """Dense constraint row and its sparse stand-in for :func:`lu_factor`.

        The stand-in is the trace integral over a single element; it is
        nonzero on the identity tensor, the kernel the constraint removes.
        """
        return self.layout["multiplier"], self.surrogate

    @property
    def D(self):
        """Right-hand pencil matrix blockdiag(0, [0], -M, 0)."""
        n = self.layout["size"]
        u0 = self.layout["u"]
        diag = np.zeros(n)
        diag[u0 : u0 + self.M.shape[0]] = -self.M.diagonal()
        return sp.diags(diag, format="csr")

    @property
    def size(self):
        return self.layout["size"]


def _local_tensors(mesh, degree=2):
    """Quadrature weights and the six tensor basis functions per element."""
    x, w = map_points(mesh, quadrature_rule(degree))
    p = mesh.vertices[mesh.triangles]
    phi = rt0_scales(mesh)[:, :, None, None] * (x[:, None, :, :] - p[:, :, None, :])
    nt, _, nq, _ = phi.shape
    psi = np.zeros((nt, 6, nq, 2, 2))
    for r in range(2):
        psi[:, 3 * r : 3 * r + 3, :, r, :] = phi
    return w, psi


def _local_matrices(mesh, mu, scheme):
    w, psi = _local_tensors(mesh)
    tr = psi[..., 0, 0] + psi[..., 1, 1]
    dev = psi - 0.5 * tr[..., None, None] * np.eye(2)
    a_dev = np.einsum("tq,taqkl,tbqkl->tab", w, dev, dev) / (2 * mu)
    tr_int = np.einsum("tq,taq->ta", w, tr)
    out = {"c": tr_int}
    if scheme == "full":
        a_tr = np.einsum("tq,taq,tbq->tab", w, tr, tr)
        out["ss"] = a_dev + a_tr / (2 * mu * DIM)
        out["sp"] = tr_int / (2 * mu)
        out["pp"] = DIM / (2 * mu) * mesh.areas()
    else:
        out["ss"] = a_dev
    # summation order differs between (a, b) and (b, a); average for exact symmetry
    out["ss"] = 0.5 * (out["ss"] + out["ss"].transpose(0, 2, 1))
    div_int = 2 * rt0_scales(mesh) * mesh.areas()[:, None]  # s_i |e_i|
    b = np.zeros((mesh.n_triangles, 2, 6))
    b[:, 0, :3] = div_int
    b[:, 1, 3:] = div_int
    out["b"] = b
    return out


def assemble_velocity_mass(mesh, dofmap=None):
    """Diagonal P0 mass matrix of the velocity, |T| for both components."""
    return sp.diags(np.repeat(mesh.areas(), 2), format="dia")


def _assemble(mesh, dofmap, mu, scheme):
    if mu <= 0:
        raise ValueError("viscosity must be positive")
    if dofmap is None:
        dofmap = build_dofmap(mesh)
    if dofmap.n_edges != mesh.n_edges or dofmap.n_triangles != mesh.n_triangles:
        raise ValueError("dofmap does not belong to this mesh")
    if np.any(mesh.areas() <= 0):
        raise ValueError("zero-area element")
    lay = dofmap.layout(scheme)
    loc = _local_matrices(mesh, mu, scheme)
    nt = mesh.n_triangles
    tri = np.arange(nt)
    s = dofmap.sigma.reshape(nt, 6)
    u = lay["u"] + 2 * tri[:, None] + np.arange(2)[None, :]
    lam = np.full((nt, 6), lay["multiplier"])

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.broadcast_to(r, v.shape).ravel())
        cols.append(np.broadcast_to(c, v.shape).ravel())
        vals.append(v.ravel())

    add(s[:, :, None], s[:, None, :], loc["ss"])
    if scheme == "full":
        pdof = (lay["p"] + tri)[:, None]
        add(s, pdof, loc["sp"])
        add(pdof, s, loc["sp"])
        add(pdof[:, 0], pdof[:, 0], loc["pp"])
    add(u[:, :, None], s[:, None, :], loc["b"])
    add(s[:, None, :], u[:, :, None], loc["b"])
    add(s, lam, loc["c"])
    add(lam, s, loc["c"])

    K = csr_from_triplets(
        lay["size"], np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )
    surrogate = np.zeros(lay["size"])
    np.add.at(surrogate, s[0], loc["c"][0])
    return AssembledSystem(
        K, assemble_velocity_mass(mesh, dofmap), lay, float(mu), scheme, surrogate
    )


def assemble_full(mesh, dofmap=None, mu=0.5):
    """Pseudostress-pressure-velocity system."""
    return _assemble(mesh, dofmap, mu, "full")


def assemble_reduced(mesh, dofmap=None, mu=0.5):
    """Pseudostress-velocity system (pressure eliminated)."""
    return _assemble(mesh, dofmap, mu, "reduced")


def assemble(mesh, scheme="full", mu=0.5, dofmap=None):
    if scheme not in ("full", "reduced"):
        raise ValueError(f"unknown scheme {scheme!r}")
    return _assemble(mesh, dofmap, mu, scheme)
