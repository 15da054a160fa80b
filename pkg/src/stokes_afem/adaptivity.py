"""Marking, the solve-estimate-mark-refine loop and convergence bookkeeping."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import numpy as np
from scipy.optimize import curve_fit

from .assembly import assemble
from .estimators import SpectralSolution, compute_eta, compute_theta
from .linalg import EigenSolverError, shift_invert_eigensolve
from .mesh import bisect_marked, generate_domain, geometry_tables, uniform_refine

DEFAULT_N0 = {"square": 2, "lshape": 2, "tshape": 6}
TSHAPE_LAMBDA = 80.87944


class CampaignError(RuntimeError):
    """Raised when a campaign aborts; ``table`` holds the rows completed so far."""

    def __init__(self, message, table):
        super().__init__(message)
        self.table = table


@dataclass
class RunConfig:
    """Everything that defines one convergence study.

    ``lambda_ref`` of None means: look it up with :func:`reference_eigenvalue`
    (NaN errors if the domain has none). ``n0`` of None picks a per-domain
    default initial resolution.
    """

    domain: str = "tshape"
    scheme: str = "full"
    refinement: str = "adaptive"
    estimator: str = "eta"
    mu: float = 0.5
    n0: int | None = None
    max_iterations: int = 20
    shift: float = 0.0
    nev: int = 1
    tol: float = 1e-10
    lambda_ref: float | None = None
    out: str | None = None
    fraction: float = 0.5
    dof_cap: int = 500_000
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(name, msg):
            raise ValueError(f"{name}: {msg}")

        if self.domain not in DEFAULT_N0:
            bad("domain", f"unknown domain {self.domain!r}; expected one of {sorted(DEFAULT_N0)}")
        if self.scheme not in ("full", "reduced"):
            bad("scheme", f"expected 'full' or 'reduced', got {self.scheme!r}")
        if self.refinement not in ("uniform", "adaptive"):
            bad("refinement", f"expected 'uniform' or 'adaptive', got {self.refinement!r}")
        if self.estimator not in ("eta", "theta"):
            bad("estimator", f"expected 'eta' or 'theta', got {self.estimator!r}")
        if self.estimator == "eta" and self.scheme != "full":
            bad("estimator", "eta needs the full scheme (it uses the pressure)")
        if not self.mu > 0:
            bad("mu", "must be positive")
        if self.n0 is not None and self.n0 < 1:
            bad("n0", "must be a positive integer")
        if self.domain == "tshape" and self.n0 is not None and self.n0 % 6:
            bad("n0", "the T-shape needs a multiple of 6")
        if self.max_iterations < 0:
            bad("max_iterations", "must be >= 0")
        if self.nev < 1:
            bad("nev", "must be >= 1")
        if not self.tol >= 0:
            bad("tol", "must be >= 0")
        if not 0 < self.fraction <= 1:
            bad("fraction", "must lie in (0, 1]")
        if self.dof_cap < 1:
            bad("dof_cap", "must be positive")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def to_dict(self):
        return asdict(self)


@dataclass
class IterationRecord:
    iter: int
    N: int
    lambda_h1: float
    err: float
    estimator_sq: float
    effectivity: float
    elements: int
    seconds: float
    eigenvalues: tuple = ()


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    config: RunConfig | None = None
    mesh: object = None
    solution: SpectralSolution | None = None
    indicators: object = None

    def __len__(self):
        return len(self.rows)

    def append(self, row):
        if self.rows and row.N <= self.rows[-1].N:
            raise ValueError("degrees of freedom must increase across iterations")
        self.rows.append(row)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


def mark_elements(indicators, fraction=0.5):
    """Indices T with beta_T >= fraction * max beta (beta unsquared)."""
    beta = indicators.beta if hasattr(indicators, "beta") else np.sqrt(np.asarray(indicators, float))
    if beta.size == 0:
        raise ValueError("empty indicator field")
    top = beta.max()
    if not top > 0:
        raise ValueError("all indicators vanish; nothing to mark")
    return np.flatnonzero(beta >= fraction * top)


def effectivity(err, estimator_sq):
    if estimator_sq == 0:
        raise ZeroDivisionError("estimator is zero")
    return err / estimator_sq


def fit_rate(table, window=None, x="N", y="err"):
    """Least-squares slope of log(err) against log(N) over the last ``window`` rows.

    ``table`` is a :class:`ConvergenceTable` or a pair of arrays ``(N, err)``.
    """
    if isinstance(table, ConvergenceTable):
        xs, ys = table.column(x), table.column(y)
    else:
        xs, ys = (np.asarray(a, float) for a in table)
    if window is not None:
        xs, ys = xs[-window:], ys[-window:]
    ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
    if ok.sum() < 2:
        raise ValueError("need at least two points with positive error")
    slope, _ = np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)
    return float(slope)


def _reference_table():
    text = resources.files("stokes_afem").joinpath("data/reference_eigenvalues.json").read_text()
    return json.loads(text)


def reference_eigenvalue(domain, scheme="full", mu=0.5):
    """Exact lowest eigenvalue for ``domain`` at viscosity ``mu``.

    Stored values hold for 2 mu = 1 and scale linearly with 2 mu. Both
    schemes approximate the same continuous eigenvalue.
    """
    if scheme not in ("full", "reduced"):
        raise ValueError(f"unknown scheme {scheme!r}")
    table = _reference_table()["domains"]
    if domain not in table:
        raise KeyError(f"no reference eigenvalue for domain {domain!r}")
    return 2.0 * mu * float(table[domain]["lambda"])


def richardson_extrapolate(N, lam, rate=None):
    """Fit lam_h = lam + c N^(-r) and return ``(lam, c, r, rms residual)``.

    Uses a nonlinear least-squares fit on all points; ``rate`` fixes r.
    """
    N = np.asarray(N, float)
    lam = np.asarray(lam, float)
    if len(N) < 3 or (rate is None and len(N) < 4):
        raise ValueError("not enough levels for extrapolation")
    scale = N[0]
    if rate is None:
        f = lambda n, a, c, r: a + c * (n / scale) ** (-r)  # noqa: E731
        d = lam[-1] - lam[-2]
        q = (lam[-2] - lam[-3]) / d if d else 4.0
        r0 = max(math.log(abs(q)) / math.log(N[-1] / N[-2]), 0.1)
        p0 = (lam[-1] + d / (abs(q) - 1 if abs(q) > 1 else 1.0), (lam[0] - lam[-1]), r0)
        popt, _ = curve_fit(f, N, lam, p0=p0, maxfev=20000)
        a, c, r = popt
    else:
        A = np.column_stack([np.ones_like(N), (N / scale) ** (-rate)])
        (a, c), *_ = np.linalg.lstsq(A, lam, rcond=None)
        r = rate
        f = lambda n, a, c, r: a + c * (n / scale) ** (-r)  # noqa: E731
    res = lam - f(N, a, c, r)
    return float(a), float(c) * scale ** float(r), float(r), float(np.sqrt(np.mean(res**2)))


def solve_on_mesh(mesh, config, shift=None):
    """Assemble, solve and normalize; returns ``(system, solution, eigenvalues)``."""
    system = assemble(mesh, config.scheme, config.mu)
    s = config.shift if shift is None else shift
    pairs = shift_invert_eigensolve(
        system.K, system.D, shift=s, nev=config.nev, tol=config.tol, seed=config.seed,
        border=system.border,
    )
    first = min(pairs, key=lambda p: p.eigenvalue)
    sol = SpectralSolution.from_vector(mesh, system, first.eigenvalue, first.vector)
    return system, sol, tuple(sorted(p.eigenvalue for p in pairs))


def run_campaign(config, on_row=None, mesh=None):
    """Run the solve-estimate-mark-refine loop described by ``config``.

    Parameters
    ----------
    on_row : callable, optional
        Called with each :class:`IterationRecord` as soon as it is complete.
    mesh : Mesh, optional
        Initial mesh; defaults to ``generate_domain(config.domain, n0)``.
    """
    config.validate()
    if mesh is None:
        mesh = generate_domain(config.domain, config.n0 or DEFAULT_N0[config.domain])
    lam_ref = config.lambda_ref
    if lam_ref is None:
        try:
            lam_ref = reference_eigenvalue(config.domain, config.scheme, config.mu)
        except KeyError:
            lam_ref = math.nan
    table = ConvergenceTable(config=config)
    shift = None
    for it in range(config.max_iterations + 1):
        n_total = 2 * mesh.n_edges + 2 * mesh.n_triangles + 1
        n_total += mesh.n_triangles if config.scheme == "full" else 0
        if table.rows and n_total > config.dof_cap:
            break
        t0 = time.perf_counter()
        try:
            _, sol, eigs = solve_on_mesh(mesh, config, shift)
        except EigenSolverError as exc:
            raise CampaignError(f"iteration {it}: {exc}", table) from exc
        geo = geometry_tables(mesh)
        ind = compute_eta(mesh, geo, sol) if config.estimator == "eta" else compute_theta(mesh, geo, sol)
        err = abs(lam_ref - sol.eigenvalue)
        est = ind.global_sq
        row = IterationRecord(
            it, n_total, sol.eigenvalue, err, est, effectivity(err, est) if est > 0 else math.nan,
            mesh.n_triangles, time.perf_counter() - t0, eigs,
        )
        table.append(row)
        table.mesh, table.solution, table.indicators = mesh, sol, ind
        if on_row is not None:
            on_row(row)
        shift = sol.eigenvalue
        if it == config.max_iterations:
            break
        if config.refinement == "uniform":
            mesh = uniform_refine(mesh)
        else:
            try:
                marked = mark_elements(ind, config.fraction)
            except ValueError as exc:
                raise CampaignError(f"iteration {it}: {exc}", table) from exc
            mesh = bisect_marked(mesh, marked)
    return table
