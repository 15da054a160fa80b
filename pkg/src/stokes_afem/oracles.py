"""Independent brute-force references for the fast vectorized code paths.

Nothing here calls the closed-form basis, the vectorized assembly or the
vectorized estimators. The RT0 basis is rebuilt per element by solving the
flux conditions, integrals use the degree-6 rule or 6-point edge Gauss,
element curls come from boundary integrals (Stokes theorem), and edge
traces are sampled by locating points from each side.
"""
from __future__ import annotations

import numpy as np

from .fe import build_dofmap, gauss_unit, quadrature_rule
from .linalg import dense_generalized_eig

EDGE_N = 6


def _edge_geometry(vertices, a, b):
    pa, pb = vertices[a], vertices[b]
    d = pb - pa
    length = float(np.hypot(*d))
    return pa, pb, length


def global_normal(vertices, a, b):
    """Unit normal of edge {a, b}: the low-to-high tangent turned clockwise."""
    lo, hi = min(a, b), max(a, b)
    d = vertices[hi] - vertices[lo]
    d = d / np.hypot(*d)
    return np.array([d[1], -d[0]])


def local_basis(vertices, tri):
    """Affine RT0 fields (a_i, b_i) with phi_i(x) = a_i + b_i x on one element.

    The i-th field has flux |e_i| through edge e_i (opposite vertex i)
    measured along the global edge normal and zero flux through the other
    edges, so neighbours sharing the edge agree on the normal trace. The 3x3
    flux system is solved numerically. ``sign`` reports whether the global
    normal points out of the element.
    """
    p = vertices[list(tri)]
    t, w = gauss_unit(EDGE_N)
    F = np.zeros((3, 3))
    sign = np.zeros(3)
    lengths = np.zeros(3)
    for j in range(3):
        a, b = tri[(j + 1) % 3], tri[(j + 2) % 3]
        pa, pb, length = _edge_geometry(vertices, a, b)
        n = global_normal(vertices, a, b)
        mid = 0.5 * (pa + pb)
        outward = np.dot(mid - p[j], n) > 0
        sign[j] = 1.0 if outward else -1.0
        lengths[j] = length
        x = pa[None, :] + t[:, None] * (pb - pa)[None, :]
        # unknowns (a0, a1, b): flux of a + b x
        F[j, 0] = length * n[0]
        F[j, 1] = length * n[1]
        F[j, 2] = length * np.dot(w, x @ n)
    rhs = np.diag(lengths)
    coef = np.linalg.solve(F, rhs)  # column i -> basis i
    return coef[:2].T, coef[2], sign


def element_areas(vertices, triangles):
    p = vertices[triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _element_rule(vertices, tri):
    rule = quadrature_rule(6)
    p = vertices[list(tri)]
    x = rule.barycentric @ p
    area = element_areas(vertices, np.array([tri]))[0]
    return x, 2 * area * rule.weights


def _tensor_basis(vertices, tri):
    """Six tensor basis functions as callables plus their row index."""
    a, b, _ = local_basis(vertices, tri)
    out = []
    for r in range(2):
        for i in range(3):
            def f(x, r=r, i=i):
                v = np.zeros((len(x), 2, 2))
                v[:, r, :] = a[i][None, :] + b[i] * x
                return v
            out.append((f, 2 * b[i], r))
    return out


def _dev(s):
    tr = s[:, 0, 0] + s[:, 1, 1]
    d = s.copy()
    d[:, 0, 0] -= tr / 2
    d[:, 1, 1] -= tr / 2
    return d


def brute_force_matrix(mesh, scheme="full", mu=0.5):
    """Dense system matrix built entry by entry with degree-6 quadrature."""
    V = np.asarray(mesh.vertices)
    T = np.asarray(mesh.triangles)
    dm = build_dofmap(mesh)
    lay = dm.layout(scheme)
    n = lay["size"]
    K = np.zeros((n, n))
    for t, tri in enumerate(T):
        x, w = _element_rule(V, tri)
        basis = _tensor_basis(V, tri)
        vals = [f(x) for f, _, _ in basis]
        dofs = [int(dm.sigma[t, r, i]) for r in range(2) for i in range(3)]
        area = w.sum()
        for A in range(6):
            for B in range(6):
                ea = np.einsum("q,qkl,qkl->", w, _dev(vals[A]), _dev(vals[B])) / (2 * mu)
                if scheme == "full":
                    ta = vals[A][:, 0, 0] + vals[A][:, 1, 1]
                    tb = vals[B][:, 0, 0] + vals[B][:, 1, 1]
                    ea += 2 / (2 * mu) * np.dot(w, ta * tb / 4)
                K[dofs[A], dofs[B]] += ea
            tr = vals[A][:, 0, 0] + vals[A][:, 1, 1]
            K[dofs[A], lay["multiplier"]] += np.dot(w, tr)
            K[lay["multiplier"], dofs[A]] += np.dot(w, tr)
            if scheme == "full":
                pd = lay["p"] + t
                K[dofs[A], pd] += 2 / (2 * mu) * np.dot(w, tr / 2)
                K[pd, dofs[A]] += 2 / (2 * mu) * np.dot(w, tr / 2)
            div = basis[A][1]
            r = basis[A][2]
            ud = lay["u"] + 2 * t + r
            K[dofs[A], ud] += div * area
            K[ud, dofs[A]] += div * area
        if scheme == "full":
            pd = lay["p"] + t
            K[pd, pd] += 2 / (2 * mu) * area
    M = np.zeros(n)
    for t in range(len(T)):
        a = element_areas(V, T[t : t + 1])[0]
        M[lay["u"] + 2 * t] = M[lay["u"] + 2 * t + 1] = -a
    return K, np.diag(M)


def assembly_discrepancy(mesh, system):
    """Largest entrywise gap between ``system`` and the brute-force matrix."""
    K, D = brute_force_matrix(mesh, system.scheme, system.mu)
    return max(
        float(np.abs(system.K.toarray() - K).max()),
        float(np.abs(system.D.toarray() - D).max()),
    )


def _field_coefficients(vertices, tri, t, dm, sigma):
    a, b, _ = local_basis(vertices, tri)
    alpha = np.zeros((2, 2))
    beta = np.zeros(2)
    for r in range(2):
        for i in range(3):
            c = sigma[dm.sigma[t, r, i]]
            alpha[r] += c * a[i]
            beta[r] += c * b[i]
    return alpha, beta


def _eval(alpha, beta, x):
    return alpha[None, :, :] + beta[None, :, None] * x[:, None, :]


def _contains(vertices, tri, x, tol=1e-12):
    p = vertices[list(tri)]
    M = np.column_stack([p[1] - p[0], p[2] - p[0]])
    lam = np.linalg.solve(M, x - p[0])
    return lam.min() >= -tol and lam.sum() <= 1 + tol


def brute_force_indicators(mesh, sigma, p, u, mu=0.5):
    """Per-term indicator arrays computed element by element.

    Returns a dict with the same keys as the vectorized indicator fields.
    """
    V = np.asarray(mesh.vertices)
    T = np.asarray(mesh.triangles)
    nt = len(T)
    dm = build_dofmap(mesh)
    u = np.asarray(u, float).reshape(nt, 2)
    areas = element_areas(V, T)
    coeffs = [_field_coefficients(V, tri, t, dm, sigma) for t, tri in enumerate(T)]
    diam = np.array(
        [max(np.hypot(*(V[tri[i]] - V[tri[j]])) for i in range(3) for j in range(i)) for tri in T]
    )
    # vertex averages by looping over vertices
    vert = np.zeros((len(V), 2))
    for z in range(len(V)):
        patch = [t for t in range(nt) if z in T[t]]
        vert[z] = sum(areas[t] * u[t] for t in patch) / sum(areas[t] for t in patch)

    # edges: (sorted pair) -> list of triangles
    edge_tris = {}
    for t, tri in enumerate(T):
        for j in range(3):
            key = tuple(sorted((tri[(j + 1) % 3], tri[(j + 2) % 3])))
            edge_tris.setdefault(key, []).append(t)

    terms = {k: np.zeros(nt) for k in (
        "postprocess", "curl", "gradient", "jump", "boundary",
        "pressure", "pressure_curl", "pressure_jump", "pressure_boundary",
    )}
    tg, wg = gauss_unit(EDGE_N)
    rule = quadrature_rule(6)
    for t, tri in enumerate(T):
        alpha, beta = coeffs[t]
        x, w = _element_rule(V, tri)
        lifted = rule.barycentric @ vert[list(tri)]
        terms["postprocess"][t] = np.dot(w, ((lifted - u[t]) ** 2).sum(axis=1))
        dev = _dev(_eval(alpha, beta, x)) / (2 * mu)
        terms["gradient"][t] = diam[t] ** 2 * np.dot(w, (dev**2).sum(axis=(1, 2)))
        # constant curl from the boundary circulation of each row
        circ = np.zeros(2)
        qcirc = np.zeros(2)
        q0 = None if p is None else p[t]
        for j in range(3):
            pa, pb = V[tri[(j + 1) % 3]], V[tri[(j + 2) % 3]]
            xs = pa[None, :] + tg[:, None] * (pb - pa)[None, :]
            ds = (pb - pa)  # counterclockwise traversal, |ds| folded into weights
            dv = _dev(_eval(alpha, beta, xs)) / (2 * mu)
            circ += np.einsum("q,qrk,k->r", wg, dv, ds)
            if q0 is not None:
                s = _eval(alpha, beta, xs)
                q = q0 + 0.5 * (s[:, 0, 0] + s[:, 1, 1])
                # rows of q I: (q, 0) and (0, q)
                qcirc += np.array([np.dot(wg, q) * ds[0], np.dot(wg, q) * ds[1]])
        terms["curl"][t] = diam[t] ** 2 * areas[t] * ((circ / areas[t]) ** 2).sum()
        if q0 is not None:
            s = _eval(alpha, beta, x)
            q = q0 + 0.5 * (s[:, 0, 0] + s[:, 1, 1])
            terms["pressure"][t] = np.dot(w, q**2)
            terms["pressure_curl"][t] = diam[t] ** 2 * areas[t] * ((qcirc / areas[t]) ** 2).sum()

    for (a, b), tris in edge_tris.items():
        pa, pb = V[a], V[b]
        length = np.hypot(*(pb - pa))
        tangent = (pb - pa) / length
        xs = pa[None, :] + tg[:, None] * (pb - pa)[None, :]
        w = length * wg
        sides = []
        qsides = []
        for t in tris:
            assert all(_contains(V, T[t], xx) for xx in xs)
            alpha, beta = coeffs[t]
            s = _eval(alpha, beta, xs)
            sides.append(np.einsum("qrk,k->qr", _dev(s), tangent) / (2 * mu))
            if p is not None:
                qsides.append(p[t] + 0.5 * (s[:, 0, 0] + s[:, 1, 1]))
        jump = sides[0] - (sides[1] if len(sides) == 2 else 0.0)
        val = length * np.dot(w, (jump**2).sum(axis=1))
        key = "jump" if len(tris) == 2 else "boundary"
        for t in tris:
            terms[key][t] += val
        if p is not None:
            qj = qsides[0] - (qsides[1] if len(qsides) == 2 else 0.0)
            qval = length * np.dot(w, qj**2)
            key = "pressure_jump" if len(tris) == 2 else "pressure_boundary"
            for t in tris:
                terms[key][t] += qval
    if p is None:
        for k in ("pressure", "pressure_curl", "pressure_jump", "pressure_boundary"):
            del terms[k]
    return terms


def commuting_discrepancy(mesh, field, divergence, n_gauss=4):
    """max |div(Pi_h tau) - P_h div tau| over elements and rows.

    ``field`` maps points (m, 2) to tensors (m, 2, 2) and ``divergence``
    maps points to the row divergences (m, 2).
    """
    from .fe import interpolate_rt0

    V = np.asarray(mesh.vertices)
    T = np.asarray(mesh.triangles)
    dm = build_dofmap(mesh)
    coeff = interpolate_rt0(mesh, field, n_gauss)
    worst = 0.0
    for t, tri in enumerate(T):
        _, beta = _field_coefficients(V, tri, t, dm, coeff)
        x, w = _element_rule(V, tri)
        mean = w @ divergence(x) / w.sum()
        worst = max(worst, float(np.abs(2 * beta - mean).max()))
    return worst


def random_polynomial_tensor(rng, degree=3):
    """Random polynomial tensor field and its row divergence."""
    powers = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    c = rng.standard_normal((2, 2, len(powers)))

    def field(x):
        mono = np.column_stack([x[:, 0] ** i * x[:, 1] ** j for i, j in powers])
        return np.einsum("rkm,qm->qrk", c, mono)

    def divergence(x):
        dx = np.column_stack(
            [i * x[:, 0] ** max(i - 1, 0) * x[:, 1] ** j for i, j in powers]
        )
        dy = np.column_stack(
            [j * x[:, 0] ** i * x[:, 1] ** max(j - 1, 0) for i, j in powers]
        )
        return np.einsum("rm,qm->qr", c[:, 0], dx) + np.einsum("rm,qm->qr", c[:, 1], dy)

    return field, divergence


def dense_lowest_eigenvalue(system):
    """Smallest positive finite eigenvalue of the pencil via dense QZ."""
    lam = dense_generalized_eig(system.K, system.D)
    lam = lam[lam > 1e-8]
    return float(lam.min())


def small_meshes():
    """Meshes with at most 8 triangles used by the oracle suites."""
    from .mesh import bisect_marked, generate_domain

    return [
        generate_domain("square", 1),
        generate_domain("square", 2),
        bisect_marked(generate_domain("square", 1), [0]),
        bisect_marked(generate_domain("lshape", 1), [3]),
    ]


def _check(name, worst, tol):
    return name, bool(worst <= tol), f"max deviation {worst:.3e} (tol {tol:.0e})"


def run_selftest(seed=0):
    """Run every oracle suite; returns a list of ``(name, passed, detail)``."""
    from .assembly import assemble
    from .estimators import SpectralSolution, compute_eta
    from .linalg import shift_invert_eigensolve
    from .mesh import generate_domain, geometry_tables

    rng = np.random.default_rng(seed)
    meshes = [m for m in small_meshes() if m.n_triangles <= 8]
    results = []

    worst = 0.0
    for m in meshes:
        for scheme in ("full", "reduced"):
            for mu in (0.5, 1.3):
                worst = max(worst, assembly_discrepancy(m, assemble(m, scheme, mu)))
    results.append(_check("assembly vs brute-force quadrature", worst, 1e-12))

    worst = 0.0
    for k in range(20):
        field, div = random_polynomial_tensor(rng)
        worst = max(worst, commuting_discrepancy(meshes[k % len(meshes)], field, div))
    results.append(_check("commuting diagram div Pi_h = P_h div", worst, 1e-10))

    worst = 0.0
    for m in meshes:
        geo = geometry_tables(m)
        for _ in range(3):
            mu = rng.uniform(0.3, 2.0)
            sig = rng.standard_normal(2 * m.n_edges)
            p = rng.standard_normal(m.n_triangles)
            u = rng.standard_normal((m.n_triangles, 2))
            fast = compute_eta(m, geo, SpectralSolution(1.0, sig, p, u, mu, "full")).terms
            slow = brute_force_indicators(m, sig, p, u, mu)
            for key, ref in slow.items():
                gap = np.abs(fast[key] - ref) / np.maximum(1.0, np.abs(ref))
                worst = max(worst, float(gap.max()))
    results.append(_check("estimator terms vs brute-force quadrature", worst, 1e-12))

    worst = 0.0
    for domain, n0, scheme in (("square", 2, "full"), ("square", 2, "reduced"), ("lshape", 2, "full")):
        m = generate_domain(domain, n0)
        s = assemble(m, scheme)
        if s.size > 200:
            continue
        lam = shift_invert_eigensolve(s.K, s.D, border=s.border)[0].eigenvalue
        ref = dense_lowest_eigenvalue(s)
        worst = max(worst, abs(lam - ref) / ref)
    results.append(_check("sparse eigensolver vs dense QZ", worst, 1e-8))
    return results
