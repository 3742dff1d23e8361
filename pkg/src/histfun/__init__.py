"""Historical function-on-function regression with an unknown forward lag.

Estimates the bivariate coefficient surface of a lagged functional linear
model together with the lag itself, by combining a triangular finite-element
basis on the domain {0 <= s <= t <= T} with a nested group bridge penalty
that shrinks entire upper-left regions of the surface to zero.
"""

from .design import (
    CenteredData,
    DesignSystem,
    FunctionalSample,
    assemble,
    center,
    compute_psi,
)
from .estimator import (
    BootstrapResult,
    FitResult,
    bootstrap_delta_ci,
    extract_delta,
    fit_historical_model,
    ols_initial,
    predict,
    recover_intercept,
    refit,
    tune_historical_model,
)
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DataError,
    DomainError,
    EstimationError,
    HistfunError,
    TuningError,
    WeightError,
)
from .fem import (
    CoefficientSurface,
    TriangularMesh,
    build_mesh,
    eval_basis,
    eval_surface,
    node_coordinates,
)
from .penalties import (
    GroupWeights,
    NestedGroups,
    PenaltySystem,
    SmoothnessPenalty,
    assemble_R,
    build_difference_matrices,
    build_groups,
    build_penalty_system,
    build_smoothness,
    compute_weights,
)
from .simulation import (
    MetricsReport,
    Scenario,
    evaluate,
    gen_covariates,
    gen_response,
    make_scenario,
    run_scenario_study,
    true_beta,
)
from .solver import (
    BridgeConfig,
    BridgeState,
    fit_group_bridge,
    solve_lasso,
    tau_from_lambda,
    update_g,
    update_theta,
)
from .tuning import TuningGrid, bic, effective_df, grid_search

__version__ = "0.1.0"
