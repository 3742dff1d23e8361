"""High-level estimation pipeline and residual-bootstrap inference for the lag.

The pipeline centers both samples, assembles the design system on a chosen
mesh, runs the nested group bridge fit from a penalized least squares
initializer, reads the lag off the first fully-dead nested group, refits the
surface without the bridge penalty on the surviving support, and recovers
the intercept curve from the removed means.
"""

from __future__ import annotations

import importlib.resources
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .design import (
    CenteredData,
    DesignSystem,
    FunctionalSample,
    _interp_matrix,
    _psi_operator,
    assemble,
    center,
    compute_psi,
)
from .exceptions import (
    ConfigError,
    ConvergenceError,
    EstimationError,
    WeightError,
)
from .fem import CoefficientSurface, TriangularMesh, build_mesh, eval_surface
from .penalties import (
    NestedGroups,
    PenaltySystem,
    build_groups,
    build_smoothness,
    compute_weights,
)
from .solver import (
    BridgeConfig,
    BridgeState,
    BridgeWorkspace,
    solve_smooth,
)

__all__ = [
    "FitResult",
    "BootstrapResult",
    "ols_initial",
    "extract_delta",
    "refit",
    "recover_intercept",
    "predict",
    "fit_historical_model",
    "tune_historical_model",
    "bootstrap_delta_ci",
    "fit_result_to_dict",
    "save_fit_json",
    "load_fit_json",
    "beta_grid",
    "write_beta_grid_csv",
]

logger = logging.getLogger(__name__)

LAG_RULES = ("upper", "boundary")


@dataclass
class FitResult:
    """Everything the pipeline produces for one dataset.

    beta_hat is the post-refit surface; b_bridge keeps the sparse pre-refit
    surface the lag was read from.  alpha_hat is the intercept curve on the
    observation grid.  residuals holds y - fitted on the original scale.
    """

    beta_hat: CoefficientSurface
    delta_hat: float
    alpha_hat: np.ndarray
    b_bridge: CoefficientSurface
    grid: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    lam: float
    omega: tuple
    gamma: float
    lag_rule: str
    df: float
    bic: float
    objective_trace: list
    residuals: np.ndarray
    design: DesignSystem
    groups: NestedGroups
    bridge_state: BridgeState | None = None
    tuning_records: list = field(default_factory=list)
    ci: tuple | None = None

    @property
    def mesh(self) -> TriangularMesh:
        return self.beta_hat.mesh


@dataclass
class BootstrapResult:
    lower: float
    upper: float
    deltas: np.ndarray
    level: float
    n_failed: int


def ols_initial(design: DesignSystem, R: np.ndarray, ridge: float | None = None):
    """Initial coefficients from ridge-stabilized penalized least squares."""
    psi = design.psi
    PtP = psi.T @ psi
    K = PtP.shape[0]
    if ridge is None:
        ridge = 1e-8 * np.trace(PtP) / K
    A = PtP + ridge * (R + np.eye(K))
    try:
        cho = scipy.linalg.cho_factor(A)
        b0 = scipy.linalg.cho_solve(cho, psi.T @ design.y)
    except scipy.linalg.LinAlgError as exc:
        raise EstimationError(
            "initial least squares system is singular even after ridging; "
            "increase the ridge or reduce M"
        ) from exc
    if not np.all(np.isfinite(b0)):
        raise EstimationError("initial least squares produced non-finite values")
    return b0


def _first_dead_group(b, groups: NestedGroups, zero_tol: float | None):
    """Smallest group index j in 1..M with all coefficients below tolerance."""
    b = np.asarray(b, dtype=float)
    if zero_tol is None:
        zero_tol = 1e-8 * (np.abs(b).max() if b.size else 0.0)
    M = groups.n_groups - 1
    for j in range(1, M + 1):
        if np.all(np.abs(b[groups.masks[j - 1]]) <= zero_tol):
            return j
    return None


def extract_delta(
    surface: CoefficientSurface,
    groups: NestedGroups,
    zero_tol: float | None = None,
    rule: str = "upper",
) -> float:
    """Lag implied by the first fully-zero nested group.

    rule="upper" maps a dead group j to (T/M)*j; rule="boundary" maps it to
    (T/M)*(j-1), the level of the line below which the surface is certified
    zero.  Returns T when no group in 1..M is fully zero.
    """
    if rule not in LAG_RULES:
        raise ConfigError(f"unknown lag rule {rule!r}; choose from {LAG_RULES}")
    mesh = surface.mesh
    j = _first_dead_group(surface.coefficients, groups, zero_tol)
    if j is None:
        return mesh.T
    step = mesh.T / mesh.M
    return step * j if rule == "upper" else step * (j - 1)


def refit(
    design: DesignSystem,
    penalties: PenaltySystem,
    delta_hat: float,
    certified_level: float | None = None,
) -> CoefficientSurface:
    """Smooth-only re-estimation with the certified dead region pinned at zero.

    Nodes with t - s >= certified_level (default: delta_hat) are fixed at 0;
    the remaining coefficients solve the penalized least squares restricted
    to the surviving columns and difference rows.
    """
    mesh = design.mesh
    level = delta_hat if certified_level is None else certified_level
    band = mesh.nodes[:, 1] - mesh.nodes[:, 0]
    tol = 1e-10 * mesh.T
    keep = band < level - tol
    if level >= mesh.T - tol:
        keep = np.ones(mesh.n_nodes, dtype=bool)
    if not np.any(keep):
        warnings.warn("no surviving nodes; returning the zero surface")
        return CoefficientSurface(mesh=mesh, coefficients=np.zeros(mesh.n_nodes))
    b = solve_smooth(design, penalties.smooth, keep=keep)
    return CoefficientSurface(mesh=mesh, coefficients=b)


def recover_intercept(
    x_mean, y_mean, grid, beta_hat: CoefficientSurface
) -> np.ndarray:
    """Intercept curve: mean response minus the mean covariate pushed through beta."""
    grid = np.asarray(grid, dtype=float)
    x_mean = np.asarray(x_mean, dtype=float)
    y_mean = np.asarray(y_mean, dtype=float)
    if x_mean.shape != grid.shape or y_mean.shape != grid.shape:
        raise ConfigError("mean curves must live on the provided grid")
    mesh = beta_hat.mesh
    alpha = np.empty_like(grid)
    for q, t in enumerate(grid):
        psi_row = compute_psi(mesh, grid, x_mean, float(t))
        alpha[q] = y_mean[q] - psi_row @ beta_hat.coefficients
    return alpha


def predict(fit: FitResult, x_new: FunctionalSample) -> FunctionalSample:
    """Response curves implied by the fitted model for new covariate curves."""
    if x_new.grid.shape != fit.grid.shape or not np.allclose(x_new.grid, fit.grid):
        raise ConfigError("x_new must be observed on the fitted grid")
    mesh = fit.mesh
    b = fit.beta_hat.coefficients
    preds = np.empty((x_new.n_curves, fit.grid.size))
    for q, t in enumerate(fit.grid):
        rule = _psi_operator(mesh, x_new.grid, float(t))
        if rule is None:
            preds[:, q] = fit.alpha_hat[q]
            continue
        pts, op = rule
        preds[:, q] = fit.alpha_hat[q] + (
            _interp_matrix(x_new.grid, x_new.values, pts) @ (op @ b)
        )
    return FunctionalSample(grid=fit.grid, values=preds, role="response")


def _resolve_omega(omega):
    if np.isscalar(omega):
        return (float(omega),) * 3
    omega = tuple(float(w) for w in omega)
    if len(omega) != 3:
        raise ConfigError("omega must be a scalar or a triple")
    return omega


def _group_weights(groups, gamma, b0, mode):
    if mode == "simple":
        return compute_weights(groups, gamma)
    if mode != "adaptive":
        raise ConfigError(f"unknown weights mode {mode!r}")
    try:
        return compute_weights(groups, gamma, b0)
    except WeightError:
        logger.warning("adaptive weights undefined; using simple weights")
        return compute_weights(groups, gamma)


def _diagnostics(design, penalties, b):
    """Effective df and BIC of a bridge solution; NaN when not computable."""
    from .tuning import bic as bic_value
    from .tuning import effective_df

    active = np.flatnonzero(b)
    try:
        df = effective_df(design, penalties, active, design.n_subjects)
        score = bic_value(design, b, df, design.n_subjects)
    except Exception as exc:  # diagnostics are best-effort
        logger.warning("df/BIC diagnostics failed: %s", exc)
        return float("nan"), float("nan")
    return df, score


def _finish_fit(
    *,
    design,
    penalties,
    state,
    x_cd: CenteredData,
    y_cd: CenteredData,
    x: FunctionalSample,
    y: FunctionalSample,
    lam,
    omega,
    gamma,
    lag_rule,
    tuning_records=None,
) -> FitResult:
    mesh = design.mesh
    b_bridge = CoefficientSurface(mesh=mesh, coefficients=state.b)
    j = _first_dead_group(state.b, penalties.groups, None)
    step = mesh.T / mesh.M
    if j is None:
        delta = mesh.T
        certified = mesh.T
    else:
        delta = step * j if lag_rule == "upper" else step * (j - 1)
        certified = step * (j - 1)
    beta = refit(design, penalties, delta, certified_level=certified)
    alpha = recover_intercept(x_cd.mean_curve, y_cd.mean_curve, x.grid, beta)
    df, score = _diagnostics(design, penalties, state.b)
    result = FitResult(
        beta_hat=beta,
        delta_hat=float(delta),
        alpha_hat=alpha,
        b_bridge=b_bridge,
        grid=x.grid,
        x_mean=x_cd.mean_curve,
        y_mean=y_cd.mean_curve,
        lam=float(lam),
        omega=omega,
        gamma=float(gamma),
        lag_rule=lag_rule,
        df=df,
        bic=score,
        objective_trace=list(state.objective_trace),
        residuals=np.empty(0),
        design=design,
        groups=penalties.groups,
        bridge_state=state,
        tuning_records=list(tuning_records or []),
    )
    result.residuals = y.values - predict(result, x).values
    return result


def fit_historical_model(
    x: FunctionalSample,
    y: FunctionalSample,
    M: int,
    lam: float,
    omega,
    *,
    gamma: float = 0.5,
    weights: str = "adaptive",
    lag_rule: str = "upper",
    eval_times=None,
    config: BridgeConfig | None = None,
) -> FitResult:
    """Fit the lagged model at fixed tuning parameters; see tune_historical_model."""
    if lag_rule not in LAG_RULES:
        raise ConfigError(f"unknown lag rule {lag_rule!r}")
    omega = _resolve_omega(omega)
    mesh = build_mesh(M, x.horizon)
    x_cd, y_cd = center(x), center(y)
    design = assemble(x_cd, y_cd, mesh, eval_times)
    groups = build_groups(mesh)
    smooth = build_smoothness(mesh, omega)
    b0 = ols_initial(design, smooth.R)
    gw = _group_weights(groups, gamma, b0, weights)
    penalties = PenaltySystem(groups=groups, weights=gw, smooth=smooth)
    cfg = replace(config, gamma=gamma, lam=lam) if config else BridgeConfig(
        gamma=gamma, lam=lam
    )
    state = BridgeWorkspace(design, smooth).fit(penalties, cfg, b0)
    return _finish_fit(
        design=design,
        penalties=penalties,
        state=state,
        x_cd=x_cd,
        y_cd=y_cd,
        x=x,
        y=y,
        lam=lam,
        omega=omega,
        gamma=gamma,
        lag_rule=lag_rule,
    )


def tune_historical_model(
    x: FunctionalSample,
    y: FunctionalSample,
    M: int,
    grid=None,
    *,
    gamma: float = 0.5,
    weights: str = "adaptive",
    lag_rule: str = "upper",
    eval_times=None,
    config: BridgeConfig | None = None,
) -> FitResult:
    """Fit the model with tuning parameters selected by BIC over a grid."""
    from .tuning import TuningGrid, grid_search, make_penalty_builder

    if lag_rule not in LAG_RULES:
        raise ConfigError(f"unknown lag rule {lag_rule!r}")
    mesh = build_mesh(M, x.horizon)
    x_cd, y_cd = center(x), center(y)
    design = assemble(x_cd, y_cd, mesh, eval_times)
    if grid is None:
        grid = TuningGrid.default()
    builder = make_penalty_builder(mesh, gamma, weights_mode=weights)
    cfg = config or BridgeConfig(gamma=gamma)
    lam, omega, best = grid_search(design, builder, grid, cfg)
    penalties = builder(omega, best.b0)
    return _finish_fit(
        design=design,
        penalties=penalties,
        state=best.state,
        x_cd=x_cd,
        y_cd=y_cd,
        x=x,
        y=y,
        lam=lam,
        omega=omega,
        gamma=gamma,
        lag_rule=lag_rule,
        tuning_records=grid.records,
    )


def bootstrap_delta_ci(
    fit: FitResult,
    x: FunctionalSample,
    y: FunctionalSample,
    B: int,
    level: float = 0.95,
    seed: int | None = None,
    n_jobs: int = 1,
) -> BootstrapResult:
    """Residual-bootstrap percentile interval for the lag.

    Whole residual curves are resampled with replacement across subjects,
    synthetic responses are rebuilt from the fitted curves, and the bridge
    fit at the originally selected tuning parameters is re-run.  The design
    matrix is reused since the covariates do not change.
    """
    if B < 2:
        raise ConfigError("need at least B=2 bootstrap replications")
    if not 0.0 < level < 1.0:
        raise ConfigError("level must lie in (0, 1)")
    design = fit.design
    fitted = y.values - fit.residuals
    resid = fit.residuals
    N = fitted.shape[0]

    mesh = fit.mesh
    smooth = build_smoothness(mesh, fit.omega)
    groups = fit.groups
    workspace = BridgeWorkspace(design, smooth)
    cfg = BridgeConfig(gamma=fit.gamma, lam=fit.lam)

    # The initializer's system matrix does not depend on y; factor it once.
    PtP = design.psi.T @ design.psi
    K = PtP.shape[0]
    ridge = 1e-8 * np.trace(PtP) / K
    cho = scipy.linalg.cho_factor(PtP + ridge * (smooth.R + np.eye(K)))
    step = mesh.T / mesh.M

    children = np.random.SeedSequence(seed).spawn(B)

    def one_replicate(rep: int):
        rng = np.random.default_rng(children[rep])
        idx = rng.integers(0, N, size=N)
        ystar = fitted + resid[idx]
        centered = ystar - ystar.mean(axis=0)
        ystack = centered.reshape(-1)
        b0 = scipy.linalg.cho_solve(cho, design.psi.T @ ystack)
        gw = _group_weights(groups, fit.gamma, b0, "adaptive")
        pen = PenaltySystem(groups=groups, weights=gw, smooth=smooth)
        try:
            state = workspace.fit(pen, cfg, b0, y=ystack)
        except ConvergenceError:
            return None
        j = _first_dead_group(state.b, groups, None)
        if j is None:
            return mesh.T
        return step * j if fit.lag_rule == "upper" else step * (j - 1)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one_replicate, range(B)))
    else:
        results = [one_replicate(rep) for rep in range(B)]

    deltas = np.array([r for r in results if r is not None], dtype=float)
    n_failed = B - deltas.size
    if n_failed > 0.1 * B:
        raise ConvergenceError(
            f"{n_failed}/{B} bootstrap replications failed to converge"
        )
    alpha = 1.0 - level
    lower, upper = np.percentile(deltas, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return BootstrapResult(
        lower=float(lower),
        upper=float(upper),
        deltas=deltas,
        level=level,
        n_failed=n_failed,
    )


# ---------------------------------------------------------------------------
# serialization


def _jsonable(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def fit_result_to_dict(fit: FitResult) -> dict:
    return {
        "delta_hat": fit.delta_hat,
        "ci": list(fit.ci) if fit.ci is not None else None,
        "lambda": fit.lam,
        "omega": list(fit.omega),
        "gamma": fit.gamma,
        "M": fit.mesh.M,
        "T": fit.mesh.T,
        "bic": _jsonable(fit.bic),
        "df": _jsonable(fit.df),
        "b": fit.beta_hat.coefficients.tolist(),
        "alpha": fit.alpha_hat.tolist(),
        "grid": fit.grid.tolist(),
        "lag_rule": fit.lag_rule,
    }


def _fit_schema() -> dict:
    text = (
        importlib.resources.files("histfun")
        .joinpath("schemas/fit_schema.json")
        .read_text()
    )
    return json.loads(text)


def save_fit_json(fit: FitResult, path) -> None:
    import jsonschema

    payload = fit_result_to_dict(fit)
    jsonschema.validate(payload, _fit_schema())
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_fit_json(path) -> dict:
    import jsonschema

    with open(path) as fh:
        payload = json.load(fh)
    jsonschema.validate(payload, _fit_schema())
    return payload


def beta_grid(surface: CoefficientSurface, n: int = 101) -> np.ndarray:
    """Dense (s, t, value) rows over an n-by-n lattice; zero outside the domain."""
    T = surface.mesh.T
    axis = np.linspace(0.0, T, n)
    ss, tt = np.meshgrid(axis, axis, indexing="ij")
    ss, tt = ss.ravel(), tt.ravel()
    vals = np.zeros(ss.size)
    inside = tt >= ss
    if np.any(inside):
        vals[inside] = eval_surface(surface, ss[inside], tt[inside])
    return np.column_stack([ss, tt, vals])


def write_beta_grid_csv(surface: CoefficientSurface, path, n: int = 101) -> None:
    rows = beta_grid(surface, n)
    np.savetxt(
        path, rows, delimiter=",", fmt="%.17g", header="s,t,value", comments=""
    )
