"""Recovery of the initial condition and damping of a 2-D damped wave from boundary data."""

__version__ = "0.1.0"

from .basis import TimeBasis, build_basis, nonlinear_couplings
from .carleman import (
    CarlemanConfig,
    IterationHistory,
    QuasiReversibilitySolver,
    build_weight,
    fixed_point_solve,
    initial_guess,
    quasi_reversibility_step,
    reconstruct_a,
    reconstruct_f,
)
from .estimator import TimeReductionInversion
from .forward import BoundaryData, add_noise, extract_boundary, load_boundary_data, save_boundary_data, simulate
from .grid import Grid2D, OmegaGrid
from .phantoms import PHANTOM_NAMES, make_phantom
from .pipeline import RunConfig, metrics, run
from .reduction import CoefficientBoundary, choose_cutoff, evaluate_F, project_boundary

__all__ = [
    "BoundaryData",
    "CarlemanConfig",
    "CoefficientBoundary",
    "Grid2D",
    "IterationHistory",
    "OmegaGrid",
    "PHANTOM_NAMES",
    "QuasiReversibilitySolver",
    "RunConfig",
    "TimeBasis",
    "TimeReductionInversion",
    "add_noise",
    "build_basis",
    "build_weight",
    "choose_cutoff",
    "evaluate_F",
    "extract_boundary",
    "fixed_point_solve",
    "initial_guess",
    "load_boundary_data",
    "make_phantom",
    "metrics",
    "nonlinear_couplings",
    "project_boundary",
    "quasi_reversibility_step",
    "reconstruct_a",
    "reconstruct_f",
    "run",
    "save_boundary_data",
    "simulate",
]
