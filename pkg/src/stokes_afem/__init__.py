"""Adaptive mixed finite elements for the 2D Stokes eigenvalue problem.

Pseudostress-pressure-velocity and pseudostress-velocity discretizations
with lowest-order Raviart-Thomas stresses, piecewise-constant pressure and
velocity, residual error indicators and newest-vertex-bisection adaptivity.
"""
__version__ = "0.1.0"

from .adaptivity import (
    ConvergenceTable,
    RunConfig,
    effectivity,
    fit_rate,
    mark_elements,
    reference_eigenvalue,
    richardson_extrapolate,
    run_campaign,
)
from .assembly import AssembledSystem, assemble, assemble_full, assemble_reduced
from .estimators import IndicatorField, SpectralSolution, compute_eta, compute_theta, postprocess_velocity
from .fe import build_dofmap, interpolate_rt0, quadrature_rule
from .linalg import shift_invert_eigensolve
from .mesh import Mesh, bisect_marked, generate_domain, geometry_tables, uniform_refine

__all__ = [
    "AssembledSystem", "ConvergenceTable", "IndicatorField", "Mesh", "RunConfig",
    "SpectralSolution", "assemble", "assemble_full", "assemble_reduced", "bisect_marked",
    "build_dofmap", "compute_eta", "compute_theta", "effectivity", "fit_rate",
    "generate_domain", "geometry_tables", "interpolate_rt0", "mark_elements",
    "postprocess_velocity", "quadrature_rule", "reference_eigenvalue",
    "richardson_extrapolate", "run_campaign", "shift_invert_eigensolve", "uniform_refine",
]
