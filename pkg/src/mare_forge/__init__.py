"""mare_forge: probabilistic scenario generation hitting a target MAPE.

Given a history of paired power forecasts and actuals, fit conditional error
distributions, re-target them to any feasible MAPE, and simulate scenario
sets with controllable temporal autocorrelation and curvature.
"""

from .dataio import (
    DataValidationError,
    PairedSeries,
    SidSelection,
    load_csv,
    mape,
    mare,
    relative_error,
    save_csv,
    sorted_view,
)
from .conditional_fit import BetaParams, FittedModel, fit_conditional_models, select_window_fraction
from .target_alloc import (
    AdjustedParams,
    InfeasibleTargetError,
    TargetFunction,
    WeightFunction,
    adjust_distributions,
    build_targets,
    estimate_weights,
    max_attainable_mae,
    max_feasible_mare,
    mean_abs_error,
    plausibility_score,
)
from .base_process import ArmaModel, fit_arma, latent_gaussian_series, simulate_base_process, stationary_variance
from .curvature_opt import CurvatureSpec, CurvatureSolution, second_difference, smooth
from .scenario_engine import ScenarioSet, SimulationRequest, error_quantile, simulate
from .evaluation import (
    ScoreReport,
    composite_score,
    score_mare,
    score_autocorrelation,
    score_second_difference,
)

__version__ = "0.1.0"
