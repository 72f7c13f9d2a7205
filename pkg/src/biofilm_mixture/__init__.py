"""Two-phase biofilm mixture model on a thin terrain-following slice.

The quasi-stationary coupled solver drives the free-surface height
evolution.  Manufactured-solution studies and a seeded invariant suite
check the discretisation.
"""

__version__ = "0.1.0"

from .core import (
    BiofilmError,
    Grid,
    GridError,
    LateralMode,
    ModelParams,
    ParameterError,
    ScalarField,
    VectorField,
    build_grid,
    classify_boundary,
    monod,
    regrid,
)
from .coupled import CoupledConfig, CoupledMode, SolutionState, contraction_ratios, run_fixed_point
from .interface import EvolutionConfig, HeightClosure, HeightProfile, advance_height, evolve
from .nutrient import NutrientProblem, PicardError, solve_nutrient
from .sparse import SolverError, SparseSystem, assemble, bicgstab, solve
from .stokes import StokesProblem, liquid_velocity, solve_stokes
from .transport import InvariantBreach, TransportProblem, check_sign_conditions, solve_phi

__all__ = [
    "__version__",
    "BiofilmError", "Grid", "GridError", "LateralMode", "ModelParams", "ParameterError",
    "ScalarField", "VectorField", "build_grid", "classify_boundary", "monod", "regrid",
    "CoupledConfig", "CoupledMode", "SolutionState", "contraction_ratios", "run_fixed_point",
    "EvolutionConfig", "HeightClosure", "HeightProfile", "advance_height", "evolve",
    "NutrientProblem", "PicardError", "solve_nutrient",
    "SolverError", "SparseSystem", "assemble", "bicgstab", "solve",
    "StokesProblem", "liquid_velocity", "solve_stokes",
    "InvariantBreach", "TransportProblem", "check_sign_conditions", "solve_phi",
]
