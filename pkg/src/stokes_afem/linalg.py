"""Sparse storage, direct solves and a shift-invert eigensolver.

CSR matrices are plain :class:`scipy.sparse.csr_matrix` objects. The LU
factorization is SuperLU (COLAMD ordering, partial pivoting) and the Krylov
iteration is ARPACK's implicitly restarted Arnoldi, applied to the operator
x -> (K - s D)^{-1} D x of the pencil K x = lambda D x.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    """Raised when a factorization meets a zero pivot."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EigenSolverError(RuntimeError):
    """Raised when the eigensolver fails to converge or returns garbage."""


def csr_from_triplets(dim, rows, cols=None, vals=None):
    """Compressed sparse row matrix from (row, col, value) triplets.

    Duplicates are summed in input order after a stable sort, so identical
    triplet lists always produce bit-identical matrices.

    ``rows`` may also be an iterable of ``(i, j, v)`` tuples.
    """
    if cols is None:
        trip = list(rows)
        rows = np.array([t[0] for t in trip], dtype=np.int64)
        cols = np.array([t[1] for t in trip], dtype=np.int64)
        vals = np.array([t[2] for t in trip], dtype=float)
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise ValueError("triplet arrays differ in length")
    if len(rows) and (
        rows.min() < 0 or cols.min() < 0 or rows.max() >= dim or cols.max() >= dim
    ):
        raise IndexError(f"triplet index out of range for dimension {dim}")
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    if len(r):
        new = np.empty(len(r), dtype=bool)
        new[0] = True
        new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        starts = np.flatnonzero(new)
        data = np.add.reduceat(v, starts)
        r, c = r[starts], c[starts]
    else:
        data = v
    indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=dim))])
    return sp.csr_matrix((data, c, indptr), shape=(dim, dim))


class LUFactorization:
    """Sparse LU factors of a square matrix; call :meth:`solve` repeatedly."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = A.shape
        empty = np.flatnonzero(np.diff(A.tocsr().indptr) == 0)
        if empty.size:
            raise SingularMatrixError(f"structurally zero row {empty[0]}", row=int(empty[0]))
        try:
            self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrixError(
                f"singular pivot encountered: {exc}", row=_first_zero_pivot(A)
            ) from exc

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))


def _first_zero_pivot(A, limit=3000):
    # dense fallback only to locate the offending row for the error report
    if A.shape[0] > limit:
        return None
    _, _, U = scipy.linalg.lu(A.toarray())
    d = np.abs(np.diag(U))
    bad = np.flatnonzero(d <= 1e-14 * max(d.max(), 1.0))
    return int(bad[0]) if bad.size else None


class BorderedLUFactorization:
    """Solver for a matrix whose row/column ``index`` is a dense symmetric border.

    A dense border row ruins the fill-reducing ordering. The border is
    swapped for the sparse ``surrogate`` vector, the resulting matrix P is
    factorized, and the exact inverse follows from the rank-2 update

        A = P + g e_d^T + e_d g^T,   g = border - surrogate.

    The surrogate must make P nonsingular, i.e. it must not vanish on the
    kernel that the border removes.
    """

    def __init__(self, A, index, surrogate):
        A = sp.coo_matrix(A)
        n = A.shape[0]
        d = int(index)
        border = np.asarray(sp.csc_matrix(A)[:, d].toarray()).ravel()
        row = np.asarray(sp.csr_matrix(A)[d, :].toarray()).ravel()
        if border[d] != 0 or not np.array_equal(border, row):
            raise ValueError("border must be symmetric with a zero diagonal entry")
        f = np.asarray(surrogate, dtype=float).ravel().copy()
        f[d] = 0.0
        keep = (A.row != d) & (A.col != d)
        nz = np.flatnonzero(f)
        P = sp.coo_matrix(
            (
                np.concatenate([A.data[keep], f[nz], f[nz]]),
                (
                    np.concatenate([A.row[keep], nz, np.full(len(nz), d)]),
                    np.concatenate([A.col[keep], np.full(len(nz), d), nz]),
                ),
            ),
            shape=(n, n),
        )
        self.shape = (n, n)
        self._lu = LUFactorization(P.tocsc())
        e = np.zeros(n)
        e[d] = 1.0
        g = border - f
        self._U = np.column_stack([g, e])
        self._V = np.column_stack([e, g])
        self._Z = np.column_stack([self._lu.solve(c) for c in self._U.T])
        C = np.eye(2) + self._V.T @ self._Z
        if abs(np.linalg.det(C)) < 1e-14 * max(1.0, np.abs(C).max() ** 2):
            raise SingularMatrixError("bordered matrix is singular", row=d)
        self._C = C

    def solve(self, b):
        y = self._lu.solve(b)
        return y - self._Z @ np.linalg.solve(self._C, self._V.T @ y)


def lu_factor(A, border=None):
    """Factorize ``A``; ``border=(index, surrogate)`` selects the bordered path."""
    if border is None:
        return LUFactorization(A)
    return BorderedLUFactorization(A, *border)


def solve(factorization, b):
    return factorization.solve(b)


@dataclass
class EigenPair:
    """One eigenpair of K x = lambda D x, scaled so that |x^T D x| = 1."""

    eigenvalue: float
    vector: np.ndarray
    residual: float


def pencil_residual(K, D, lam, x):
    r = K @ x - lam * (D @ x)
    return float(np.linalg.norm(r) / np.linalg.norm(x))


def _normalize(D, x):
    x = np.real_if_close(x)
    if np.iscomplexobj(x):
        k = np.argmax(np.abs(x))
        x = np.real(x * np.exp(-1j * np.angle(x[k])))
    nrm = np.sqrt(abs(x @ (D @ x)))
    if nrm == 0:
        raise EigenSolverError("eigenvector has no component in the range of D")
    x = x / nrm
    active = np.abs(D) @ np.ones(D.shape[0]) != 0
    k = np.argmax(np.abs(x) * active)
    return x if x[k] >= 0 else -x


def shift_invert_eigensolve(
    K, D, shift=0.0, nev=1, tol=1e-10, max_iter=None, seed=0, border=None
):
    """Eigenvalues of K x = lambda D x closest to ``shift``.

    Runs Arnoldi on x -> (K - shift D)^{-1} D x. Its eigenvalues nu map back
    to lambda = shift + 1/nu; nu ~ 0 (infinite lambda from the singular D) are
    discarded. ``border`` is forwarded to :func:`lu_factor`.

    Returns
    -------
    list of EigenPair
        Sorted by distance to ``shift``.
    """
    K = sp.csr_matrix(K)
    D = sp.csr_matrix(D)
    n = K.shape[0]
    if nev < 1 or nev > n - 2:
        raise ValueError(f"nev must lie in [1, {n - 2}]")
    lu = lu_factor((K - shift * D).tocsc(), border=border)
    op = spla.LinearOperator((n, n), matvec=lambda v: lu.solve(D @ v), dtype=float)
    ncv = min(n, max(20, 4 * nev))
    rng = np.random.default_rng(seed)
    for attempt in range(2):
        v0 = rng.standard_normal(n)
        try:
            nu, vecs = spla.eigs(
                op, k=nev, which="LM", v0=v0, ncv=ncv, tol=tol, maxiter=max_iter
            )
            break
        except spla.ArpackNoConvergence as exc:
            if attempt:
                raise EigenSolverError(f"Arnoldi did not converge: {exc}") from exc
    scale = np.max(np.abs(nu))
    pairs = []
    for val, vec in zip(nu, vecs.T):
        if abs(val) < 1e-12 * scale:
            continue
        if abs(val.imag) > 1e-8 * abs(val):
            raise EigenSolverError(f"complex eigenvalue {val} for a symmetric pencil")
        lam = shift + 1.0 / val.real
        x = _normalize(D, vec)
        pairs.append(EigenPair(lam, x, pencil_residual(K, D, lam, x)))
    if not pairs:
        raise EigenSolverError("only infinite eigenvalues found")
    pairs.sort(key=lambda p: (abs(p.eigenvalue - shift), p.eigenvalue))
    return pairs


def dense_generalized_eig(K, D):
    """Finite eigenvalues of K x = lambda D x via dense QZ, ascending."""
    K = K.toarray() if sp.issparse(K) else np.asarray(K)
    D = D.toarray() if sp.issparse(D) else np.asarray(D)
    ab = scipy.linalg.eigvals(K, D, homogeneous_eigvals=True)
    alpha, beta = ab
    finite = np.abs(beta) > 1e-12 * np.abs(alpha).max()
    lam = alpha[finite] / beta[finite]
    return np.sort(lam.real)
