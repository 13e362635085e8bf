"""Monotone Picard iteration for coupled forward-backward SDEs whose
generators are quadratic in the diagonal of Z, with regression Monte Carlo
for the backward equations."""

from .backward import BackwardOpts, BSDESolution, RegressionBasis, regress_conditional, solve_bounding_U, solve_bsde, solve_seed_Y0
from .comparison import ComparisonReport, run_comparison, verify_ordering_hypotheses
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .diagnostics import bmo2, estimate_norms, phi, phi_bound_check, residual_check
from .model import AssumptionReport, CoefficientFn, FBSDEProblem, probe_all, validate_problem
from .picard import ConvergenceError, ConvergenceReport, IterationConfig, check_monotone_envelope, initialize, iterate_once, run
from .registry import make_problem, problem_names
from .simulation import make_grid, sample_brownian

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "BSDESolution",
    "BackwardOpts",
    "CoefficientFn",
    "ComparisonReport",
    "ConfigError",
    "ConvergenceError",
    "ConvergenceReport",
    "ExperimentConfig",
    "FBSDEProblem",
    "IterationConfig",
    "RegressionBasis",
    "bmo2",
    "check_monotone_envelope",
    "estimate_norms",
    "initialize",
    "iterate_once",
    "load_config",
    "make_grid",
    "make_problem",
    "parse_config",
    "phi",
    "phi_bound_check",
    "problem_names",
    "probe_all",
    "regress_conditional",
    "residual_check",
    "run",
    "run_comparison",
    "sample_brownian",
    "solve_bounding_U",
    "solve_bsde",
    "solve_seed_Y0",
    "validate_problem",
    "verify_ordering_hypotheses",
]
