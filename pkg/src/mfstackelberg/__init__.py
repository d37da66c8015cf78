"""Linear-quadratic mean-field Stackelberg games with two leaders playing Nash or Pareto."""

__version__ = "0.1.0"

from .assembly import AssembledSystem, assemble, assemble_reduced, cost_weights  # noqa: E402
from .compare import (ComparisonReport, SweepRow, affine_coefficients, classify_regime,  # noqa: E402
                      compare_games, delta0_sweep, loglog_regression, threshold_L)
from .conditions import (check_compare_assumption, check_fixed_point, check_fullcond2,  # noqa: E402
                         check_fullcond3, perturbation_gate, riccati_norm_bound)
from .cost import (CostReport, cost_to_go, cost_to_go_curve, follower_cost, follower_cost_b0,  # noqa: E402
                   optimal_feedback, solve_game)
from .matrixops import BlowUpError, InvalidInputError, NumericOverflowError, TimeGrid  # noqa: E402
from .mcsim import (SimConfig, convergence_study, simulate_empirical, simulate_mean_field,  # noqa: E402
                    simulate_pair)  # noqa: E402
from .model import (GameKind, ModelParams, load_model, make_symmetric_base, model_distance,  # noqa: E402
                    reduce_to_unit_k, save_model, validate)
from .odesolve import (FiniteEscapeError, solve_reduced_paths, solve_riccati,  # noqa: E402
                       solve_riccati_exp_oracle)  # noqa: E402

__all__ = [
    "AssembledSystem", "BlowUpError", "ComparisonReport", "CostReport", "FiniteEscapeError", "GameKind",
    "InvalidInputError", "ModelParams", "NumericOverflowError", "SimConfig", "SweepRow", "TimeGrid",
    "affine_coefficients", "assemble", "assemble_reduced", "check_compare_assumption", "check_fixed_point",
    "check_fullcond2", "check_fullcond3", "classify_regime", "compare_games", "convergence_study",
    "cost_to_go", "cost_to_go_curve", "cost_weights", "delta0_sweep", "follower_cost", "follower_cost_b0", "load_model", "loglog_regression",
    "make_symmetric_base", "model_distance", "optimal_feedback", "perturbation_gate", "reduce_to_unit_k",
    "riccati_norm_bound", "save_model", "simulate_empirical", "simulate_mean_field", "simulate_pair", "solve_game",
    "solve_reduced_paths", "solve_riccati", "solve_riccati_exp_oracle", "threshold_L", "validate",
]
