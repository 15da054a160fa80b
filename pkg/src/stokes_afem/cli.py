"""Command-line interface: ``stokes-afem {run,rates,export-mesh,selftest}``."""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adaptivity import CampaignError, fit_rate, run_campaign
from .config import ConfigError, parse_config
from .estimators import postprocess_velocity
from .io import CsvStream, export_mesh, read_csv_table, write_vtk
from .mesh import DOMAIN_AREAS, generate_domain, geometry_tables, uniform_refine

THREADS_ENV = "STOKES_AFEM_THREADS"

_FLAG_TO_FIELD = {
    "domain": "domain", "scheme": "scheme", "refine": "refinement", "estimator": "estimator",
    "mu": "mu", "n0": "n0", "max_iter": "max_iterations", "shift": "shift", "nev": "nev",
    "tol": "tol", "lambda_ref": "lambda_ref", "out": "out", "fraction": "fraction",
    "dof_cap": "dof_cap", "seed": "seed",
}


def thread_limit():
    """Context manager capping BLAS/OpenMP threads from the environment."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise SystemExit(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise SystemExit(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _add_run_flags(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--domain", choices=sorted(DOMAIN_AREAS))
    p.add_argument("--scheme", choices=["full", "reduced"])
    p.add_argument("--refine", choices=["uniform", "adaptive"])
    p.add_argument("--estimator", choices=["eta", "theta"])
    p.add_argument("--mu", type=float)
    p.add_argument("--n0", type=int, help="initial cells per unit length")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--shift", type=float, help="first eigensolver shift")
    p.add_argument("--nev", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--lambda-ref", type=float)
    p.add_argument("--fraction", type=float, help="marking threshold fraction")
    p.add_argument("--dof-cap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: ./run-<domain>)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stokes-afem", description="Adaptive mixed FEM for the 2D Stokes eigenproblem."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence campaign")
    _add_run_flags(run)
    run.add_argument("--no-vtk", action="store_true", help="skip the final-mesh VTK file")

    rates = sub.add_parser("rates", help="fit convergence slopes from CSV tables")
    rates.add_argument("tables", nargs="+")
    rates.add_argument("--window", type=int, default=8, help="number of trailing rows")
    rates.add_argument("--first", type=int, default=None, help="first row index for the effectivity band")

    em = sub.add_parser("export-mesh", help="write an initial or refined mesh")
    em.add_argument("path")
    em.add_argument("--domain", choices=sorted(DOMAIN_AREAS), default="tshape")
    em.add_argument("--n0", type=int, default=None)
    em.add_argument("--levels", type=int, default=0, help="uniform refinements")
    em.add_argument("--format", choices=["msh", "vtk"], default=None)

    st = sub.add_parser("selftest", help="run the oracle suites")
    st.add_argument("--seed", type=int, default=0)
    return parser


def _run(args):
    overrides = {field: getattr(args, flag) for flag, field in _FLAG_TO_FIELD.items()}
    try:
        config = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(config.out or f"run-{config.domain}")
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.to_dict(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }

    def report(row):
        stream(row)
        print(
            f"{row.iter:3d}  N={row.N:8d}  lambda={row.lambda_h1:.6f}  "
            f"err={row.err:.3e}  est^2={row.estimator_sq:.3e}  eff={row.effectivity:.3e}  "
            f"{row.seconds:.2f}s",
            flush=True,
        )

    status = 0
    with CsvStream(out / "table.csv") as stream:
        try:
            table = run_campaign(config, on_row=report)
        except CampaignError as exc:
            print(f"error: {exc}", file=sys.stderr)
            table = exc.table
            status = 1
    manifest["iterations"] = len(table)
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    if table.mesh is not None and not args.no_vtk:
        mesh, sol, ind = table.mesh, table.solution, table.indicators
        geo = geometry_tables(mesh)
        cells = {"u_h": sol.u, "indicator_sq": ind.local}
        if sol.p is not None:
            cells["p_h"] = sol.p
        write_vtk(mesh, out / "final.vtk", cells, {"Theta_u_h": postprocess_velocity(mesh, geo, sol.u)})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out / 'table.csv'}")
    return status


def _rates(args):
    status = 0
    for path in args.tables:
        try:
            rows = read_csv_table(path)
            N = np.array([r["N"] for r in rows], float)
            err = np.array([r["err"] for r in rows], float)
            slope = fit_rate((N, err), args.window)
        except (OSError, ValueError) as exc:
            print(f"{path}: error: {exc}", file=sys.stderr)
            status = 1
            continue
        eff = np.array([r["effectivity"] for r in rows[args.first :]], float)
        eff = eff[np.isfinite(eff) & (eff > 0)]
        band = f"  eff in [{eff.min():.3e}, {eff.max():.3e}] ratio {eff.max() / eff.min():.2f}" if eff.size else ""
        print(f"{path}: slope {slope:+.3f} over last {min(args.window, len(rows))} rows{band}")
    return status


def _export_mesh(args):
    n0 = args.n0 or {"tshape": 6}.get(args.domain, 2)
    try:
        mesh = generate_domain(args.domain, n0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for _ in range(args.levels):
        mesh = uniform_refine(mesh)
    fmt = args.format or ("vtk" if args.path.endswith(".vtk") else "msh")
    if fmt == "vtk":
        write_vtk(mesh, args.path)
    else:
        export_mesh(mesh, args.path)
    print(f"wrote {args.path}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return 0


def _selftest(args):
    from .oracles import run_selftest

    t0 = time.perf_counter()
    results = run_selftest(args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} suites passed in {time.perf_counter() - t0:.1f}s")
    return 1 if failed else 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "rates": _rates, "export-mesh": _export_mesh, "selftest": _selftest}[args.command]
    with thread_limit():
        return handler(args)


if __name__ == "__main__":
    sys.exit(main())
