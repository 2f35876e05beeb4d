"""Primal decomposition for block-structured convex QPs."""

from .admm import run_admm
from .errors import (
    DefinitenessError,
    InfeasibleError,
    InvalidProblemError,
    LineSearchError,
    LinAlgError,
    NonConvergenceError,
    NumericalError,
    PrimalDecError,
    ProblemFileError,
    SingularMatrixError,
    StalePointError,
)
from .hvac import build_instance, make_scenario
from .model import BlockQP, GlobalConstraints, SubsystemBlock, assemble_monolithic, load, save, validate
from .oracle import feasibility_check, solve_monolithic
from .outer import RunConfig, SolveReport, run_al, run_l1

__all__ = [
    "SubsystemBlock", "GlobalConstraints", "BlockQP", "validate", "assemble_monolithic", "load", "save",
    "solve_monolithic", "feasibility_check", "run_al", "run_l1", "run_admm", "RunConfig", "SolveReport",
    "make_scenario", "build_instance",
    "PrimalDecError", "ProblemFileError", "InvalidProblemError", "LinAlgError", "DefinitenessError",
    "SingularMatrixError", "NonConvergenceError", "NumericalError", "StalePointError",
    "InfeasibleError", "LineSearchError",
]
