"""Finite-sample randomization confidence intervals for ATE estimators.

Submodules: ``qcore`` (pseudoinverse and intercept geometry), ``estimators``,
``swap`` (one-swap sensitivities), ``martingale`` (reveal-order concentration),
``stein`` (bias bound) and ``harness`` (experiments, reports).
"""

from .estimators import DIM, OLS, Assignment, Population, estimate, true_ate
from .harness import (
    Budgets, CIReport, ExperimentConfig, TableRow, aggregate_nested, ci_for_assignment,
    gen_population, report_emit, run_experiment1, run_experiment2,
)
from .martingale import ExactOracle, RevealOrder, freedman_radius, mc_var_range
from .qcore import DegenerateDesign, build_q_factor, intercept, pinv
from .stein import mc_bias
from .swap import swap_delta_ols, swap_matrix

__version__ = "0.1.0"

__all__ = [
    "DIM", "OLS", "Assignment", "Budgets", "CIReport", "DegenerateDesign", "ExactOracle",
    "ExperimentConfig", "Population", "RevealOrder", "TableRow", "aggregate_nested",
    "build_q_factor", "ci_for_assignment", "estimate", "freedman_radius", "gen_population",
    "intercept", "mc_bias", "mc_var_range", "pinv", "report_emit", "run_experiment1",
    "run_experiment2", "swap_delta_ols", "swap_matrix", "true_ate",
]
