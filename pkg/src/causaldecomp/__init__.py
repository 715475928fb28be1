"""Causal decomposition of group disparities.

Estimators of disparity reduction and disparity remaining, percentile
bootstrap intervals and a Monte Carlo harness for comparing them.
"""

__version__ = "0.1.0"

from .bootstrap import BootstrapConfig, IntervalEstimate, bootstrap_ci, split_rng
from .dataset import (Dataset, ReferencePoint, RoleSpec, Variable, center_covariates,
                      default_reference, load_csv, split_by_group, validate)
from .estimators import (AvailabilityError, DecompositionEstimate, EstimatorId, ModelPlan,
                         check_availability, estimate, estimate_diff_in_coeffs,
                         estimate_multi_imputation, estimate_product_of_coeffs, estimate_rmpw,
                         estimate_single_imputation, estimate_single_imputation_marginal,
                         initial_disparity, percent_reduction)
from .glm import ModelFormula, fit_linear, fit_logistic, predict_mean, predict_prob
from .simulation import (Coefficients, MetricsReport, ScenarioConfig, TrueEffects,
                         calibrate_scenario, compute_ratio, generate_scenario_data,
                         run_simulation, true_effects)

__all__ = [
    "AvailabilityError", "BootstrapConfig", "Coefficients", "Dataset", "DecompositionEstimate",
    "EstimatorId", "IntervalEstimate", "MetricsReport", "ModelFormula", "ModelPlan",
    "ReferencePoint", "RoleSpec", "ScenarioConfig", "TrueEffects", "Variable", "bootstrap_ci",
    "calibrate_scenario", "center_covariates", "check_availability", "compute_ratio",
    "default_reference", "estimate", "estimate_diff_in_coeffs", "estimate_multi_imputation",
    "estimate_product_of_coeffs", "estimate_rmpw", "estimate_single_imputation",
    "estimate_single_imputation_marginal", "fit_linear", "fit_logistic",
    "generate_scenario_data", "initial_disparity", "load_csv", "percent_reduction",
    "predict_mean", "predict_prob", "run_simulation", "split_by_group", "split_rng",
    "true_effects", "validate",
]
