"""Euler-Maruyama weak-error toolkit for SDEs with irregular drifts."""

from emweak.core import (
    DriftSpec,
    EmweakError,
    InvalidConfigError,
    NumericalBlowupError,
    SigmaSpec,
    SimConfig,
    SingularSigmaError,
    TimeGrid,
    gaussian_increments,
    grid_floor,
    make_time_grid,
    path_stream,
    sigma_analyze,
)
from emweak.drifts import catalog_get, holder_eval, svc_eval, svc_locate, svc_removed_intervals
from emweak.engine import em_coupled, em_coupled_grid, em_path, em_terminal_batch
from emweak.experiment import (
    RateReport,
    girsanov_cross_check,
    rate_vs_theory,
    test_function_get,
    weak_error_curve,
)
from emweak.girsanov import (
    check_lambda_horizon,
    check_weak_rate_condition,
    exp_moment_estimate,
    weighted_expectation,
    weights_along_path,
)

__version__ = "0.1.0"

__all__ = [
    "DriftSpec",
    "EmweakError",
    "InvalidConfigError",
    "NumericalBlowupError",
    "RateReport",
    "SigmaSpec",
    "SimConfig",
    "SingularSigmaError",
    "TimeGrid",
    "catalog_get",
    "check_lambda_horizon",
    "check_weak_rate_condition",
    "em_coupled",
    "em_coupled_grid",
    "em_path",
    "em_terminal_batch",
    "exp_moment_estimate",
    "gaussian_increments",
    "girsanov_cross_check",
    "grid_floor",
    "holder_eval",
    "make_time_grid",
    "path_stream",
    "rate_vs_theory",
    "sigma_analyze",
    "svc_eval",
    "svc_locate",
    "svc_removed_intervals",
    "test_function_get",
    "weak_error_curve",
    "weighted_expectation",
    "weights_along_path",
]
