"""Multiscale wave solver: corrected coarse spaces for the acoustic wave
equation with rough coefficients, theta-scheme time stepping, and a
config-driven convergence-study harness."""

__version__ = "0.1.0"

from .mesh import MeshHierarchy, Patch, build_hierarchy, patch
from .coefficient import CoefficientField, analytic_smooth, checkerboard, constant
from .fem import FineSystem, assemble
from .coarse import MomentMap, build_moment_map, project
from .msbasis import (MultiscaleBasis, build_basis, load_basis,
                      localization_decay, saturating_ell, save_basis)
from .wave import CFLReport, EnergyDivergenceError, ThetaSchemeConfig, cfl_check, run
from .problems import ProblemSpec, get_problem, problem_names
from .reference import (ErrorNorms, eoc, error_norms, lifted_error,
                        reference_solve, solve_multiscale)

__all__ = [
    "MeshHierarchy", "Patch", "build_hierarchy", "patch",
    "CoefficientField", "analytic_smooth", "checkerboard", "constant",
    "FineSystem", "assemble",
    "MomentMap", "build_moment_map", "project",
    "MultiscaleBasis", "build_basis", "load_basis", "localization_decay",
    "saturating_ell", "save_basis",
    "CFLReport", "EnergyDivergenceError", "ThetaSchemeConfig", "cfl_check", "run",
    "ProblemSpec", "get_problem", "problem_names",
    "ErrorNorms", "eoc", "error_norms", "lifted_error",
    "reference_solve", "solve_multiscale",
    "__version__",
]
