"""Learning multi-ridge functions f(x) = g(Ax) from point queries.

Pipeline: finite-difference measurements of directional derivatives at
random centers, low-rank recovery of the gradient matrix, extraction of
the row space of A, and grid interpolation of the profile along it.
"""

from .analysis import (AlphaEstimate, BoundsInputs, BoundsReport, alpha_origin_approx,
                       compute_bounds, estimate_alpha_mc, plan_experiment,
                       pushforward_density, pushforward_mass)
from .errors import (ArgumentError, BudgetError, ConfigError, DegenerateError, DomainError,
                     InfeasibleError, NonConvergence, RidgeliftError, SearchExhausted,
                     ShapeError)
from .estimator import FunctionEstimate, build_estimate, evaluate, uniform_error
from .harness import ExperimentConfig, find_min_mphi, preset, run_experiment, run_trial
from .model import (Custom, Linear, Logistic, NoiseModel, Oracle, QuadraticForm, RidgeModel,
                    SumOfGaussians, evaluate_oracle, gradient, random_model,
                    random_row_orthonormal)
from .recovery import (NuclearProx, RankProjected, RecoveryConfig, SparseLowRank,
                       choose_lambda, extract_subspace, recover, subspace_alignment,
                       truncate_rank)
from .sampling import (SamplingPlan, adjoint_operator, apply_operator, build_plan, measure,
                       operator_for, rip_diagnostic)

__version__ = "0.1.0"

__all__ = ["AlphaEstimate", "BoundsInputs", "BoundsReport", "alpha_origin_approx",
           "compute_bounds", "estimate_alpha_mc", "plan_experiment", "pushforward_density",
           "pushforward_mass", "ArgumentError", "BudgetError", "ConfigError",
           "DegenerateError", "DomainError", "InfeasibleError", "NonConvergence",
           "RidgeliftError", "SearchExhausted", "ShapeError", "FunctionEstimate",
           "build_estimate", "evaluate", "uniform_error", "ExperimentConfig",
           "find_min_mphi", "preset", "run_experiment", "run_trial", "Custom", "Linear",
           "Logistic", "NoiseModel", "Oracle", "QuadraticForm", "RidgeModel",
           "SumOfGaussians", "evaluate_oracle", "gradient", "random_model",
           "random_row_orthonormal", "NuclearProx", "RankProjected", "RecoveryConfig",
           "SparseLowRank", "choose_lambda", "extract_subspace", "recover",
           "subspace_alignment", "truncate_rank", "SamplingPlan", "adjoint_operator",
           "apply_operator", "build_plan", "measure", "operator_for", "rip_diagnostic"]
