"""Leverage-weighted interior point LP solver with randomized maintenance."""

from .config import IpmConstants, SolverConfig
from .driver import (Instance, ModifiedLp, SolveReport, baseline_solve,
                     build_modified_lp, extract_solution, generate_instance,
                     lp_solve)
from .ipm import PathState, centering
from .lewis import LewisParams, lewis_weights
from .linalg import (leverage_scores, mixed_norm, regularized_tau,
                     solve_normal, spectral_approx_check, weighted_tau)

__all__ = [
    "IpmConstants", "SolverConfig", "Instance", "ModifiedLp", "SolveReport",
    "baseline_solve", "build_modified_lp", "extract_solution",
    "generate_instance", "lp_solve", "PathState", "centering", "LewisParams",
    "lewis_weights", "leverage_scores", "mixed_norm", "regularized_tau",
    "solve_normal", "spectral_approx_check", "weighted_tau",
]

__version__ = "0.1.0"
