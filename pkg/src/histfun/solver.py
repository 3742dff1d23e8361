"""Group bridge estimation: scale updates, rescaled LASSO, outer iteration.

The nonconvex bridge criterion is minimized through its equivalent
constrained form: alternate a closed-form update of the auxiliary group
scales theta with a weighted LASSO solve in rescaled coordinates.  The
LASSO subproblem carries the smoothness penalty as augmented rows, and is
solved by cyclic coordinate descent with soft-thresholding, warm-started
from the previous outer iterate.  A group whose l1 norm hits zero acquires
an infinite penalty load and stays dead for the rest of the run.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .design import DesignSystem
from .exceptions import ConfigError, ConvergenceError, EstimationError
from .penalties import PenaltySystem, SmoothnessPenalty, restrict_smoothness

__all__ = [
    "BridgeConfig",
    "BridgeState",
    "tau_from_lambda",
    "update_theta",
    "update_g",
    "solve_lasso",
    "fit_group_bridge",
    "penalized_objective",
    "constrained_objective",
    "solve_smooth",
    "BridgeWorkspace",
]

logger = logging.getLogger(__name__)


@dataclass
class BridgeConfig:
    """Controls for the outer bridge iteration and the inner LASSO solver."""

    gamma: float = 0.5
    lam: float = 0.0
    max_outer_iters: int = 100
    outer_tol: float = 1e-6
    lasso_max_iters: int = 100_000
    lasso_tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        if self.outer_tol <= 0 or self.lasso_tol <= 0:
            raise ConfigError("tolerances must be positive")

    @property
    def tau(self) -> float:
        return tau_from_lambda(self.lam, self.gamma)


@dataclass
class BridgeState:
    """Solution state of a bridge fit."""

    b: np.ndarray
    theta: np.ndarray
    g: np.ndarray
    objective_trace: list = field(default_factory=list)
    n_outer_iters: int = 0
    converged: bool = False


def tau_from_lambda(lam: float, gamma: float) -> float:
    """Map the bridge shrinkage parameter to the constrained-form parameter."""
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    if lam < 0:
        raise ConfigError(f"lambda must be nonnegative, got {lam}")
    return float((lam * gamma**gamma * (1.0 - gamma) ** (1.0 - gamma)) ** (1.0 / (1.0 - gamma)))


def update_theta(b, groups, weights, tau: float, gamma: float) -> np.ndarray:
    """Closed-form group scale update from the current coefficients."""
    if tau <= 0:
        raise ConfigError("tau must be positive; route lambda=0 to the smooth solve")
    b = np.asarray(b, dtype=float)
    norms = np.array([np.abs(b[m]).sum() for m in groups.masks])
    return weights.c * ((1.0 - gamma) / (tau * gamma)) ** gamma * norms**gamma


def update_g(theta, weights, gamma: float, groups) -> np.ndarray:
    """Per-coefficient penalty loads; a zero theta contributes an infinite load."""
    theta = np.asarray(theta, dtype=float)
    n_groups = theta.size
    with np.errstate(divide="ignore"):
        terms = np.where(theta > 0, theta ** (1.0 - 1.0 / gamma), np.inf)
    terms = terms * weights.c ** (1.0 / gamma)
    # cumulative sums over j = 1..l(k)
    csum = np.concatenate([[0.0], np.cumsum(terms)])
    ell = groups.membership_count
    g = np.empty(len(ell))
    for k, lk in enumerate(ell):
        head = terms[:lk]
        g[k] = np.inf if np.any(~np.isfinite(head)) else csum[lk]
    return g


@njit(cache=True, nogil=True)
def _cd_lasso_kernel(H, c, b, max_sweeps, tol):
    """Cyclic coordinate descent for min ||y - A b||^2 + sum |b_k|, via the Gram matrix.

    H = A^T A, c = A^T y.  Stops when the max KKT violation of the scaled
    problem drops below tol.  Returns (sweeps, violation, converged).
    """
    K = b.shape[0]
    Hb = np.dot(H, b)
    viol = np.inf
    for sweep in range(max_sweeps):
        for k in range(K):
            hkk = H[k, k]
            if hkk <= 0.0:
                continue
            rho = c[k] - Hb[k] + hkk * b[k]
            if rho > 0.5:
                bk = (rho - 0.5) / hkk
            elif rho < -0.5:
                bk = (rho + 0.5) / hkk
            else:
                bk = 0.0
            diff = bk - b[k]
            if diff != 0.0:
                for l in range(K):
                    Hb[l] += H[l, k] * diff
                b[k] = bk
        viol = 0.0
        for k in range(K):
            if H[k, k] <= 0.0:
                continue
            gk = 2.0 * (Hb[k] - c[k])
            if b[k] > 0.0:
                r = abs(gk + 1.0)
            elif b[k] < 0.0:
                r = abs(gk - 1.0)
            else:
                r = abs(gk) - 1.0
                if r < 0.0:
                    r = 0.0
            if r > viol:
                viol = r
        if viol <= tol:
            return sweep + 1, viol, True
    return max_sweeps, viol, False


def _stack_smoothness(psi: np.ndarray, smooth: SmoothnessPenalty, n_subjects: int):
    """Design rows augmented with sqrt(omega * N)-scaled difference rows."""
    blocks = [psi]
    for D, w in zip(smooth.matrices(), smooth.omega):
        if w > 0 and D.shape[0] > 0:
            blocks.append(np.sqrt(w * n_subjects) * D)
    return np.vstack(blocks)


def _cd_solve(gram, cy, loads, n_subjects, b_init, max_sweeps, tol):
    """Solve the rescaled LASSO given precomputed Gram quantities.

    Coefficients with infinite load are pinned at zero; the rest are scaled
    by 1/(N g_k) and handed to the coordinate-descent kernel.
    """
    K = loads.shape[0]
    finite = np.isfinite(loads)
    b = np.zeros(K)
    if not np.any(finite):
        return b
    scale = 1.0 / (n_subjects * loads[finite])
    H = gram[np.ix_(finite, finite)] * np.outer(scale, scale)
    c = cy[finite] * scale
    if b_init is None:
        bstar = np.zeros(finite.sum())
    else:
        bstar = np.asarray(b_init, dtype=float)[finite] / scale
    tol_eff = tol * max(1.0, np.abs(c).max() if c.size else 1.0)
    sweeps, viol, ok = _cd_lasso_kernel(
        np.ascontiguousarray(H), np.ascontiguousarray(c), bstar, max_sweeps, tol_eff
    )
    if not ok:
        raise ConvergenceError(
            f"coordinate descent did not converge in {max_sweeps} sweeps "
            f"(KKT violation {viol:.3e})",
            kkt_residual=float(viol),
        )
    b[finite] = bstar * scale
    return b


def solve_lasso(
    design: DesignSystem,
    smooth: SmoothnessPenalty,
    loads,
    b_init=None,
    *,
    max_iters: int = 100_000,
    tol: float = 1e-6,
) -> np.ndarray:
    """One weighted-LASSO solve of the bridge inner subproblem.

    Minimizes ||y* - Psi* b*||^2 + sum |b*_k| with Psi* the smoothness-
    augmented design rescaled by 1/(N g_k) per column, and returns the
    solution mapped back to the original coefficient scale.
    """
    loads = np.asarray(loads, dtype=float)
    S = _stack_smoothness(design.psi, smooth, design.n_subjects)
    gram = S.T @ S
    cy = design.psi.T @ design.y
    return _cd_solve(gram, cy, loads, design.n_subjects, b_init, max_iters, tol)


def penalized_objective(
    design: DesignSystem, penalties: PenaltySystem, lam: float, b, y=None
) -> float:
    """Value of the bridge criterion: fit/N + bridge penalty + smoothness."""
    b = np.asarray(b, dtype=float)
    y = design.y if y is None else y
    r = y - design.psi @ b
    val = float(r @ r) / design.n_subjects
    gamma = penalties.weights.gamma
    for cj, mask in zip(penalties.weights.c, penalties.groups.masks):
        val += lam * cj * np.abs(b[mask]).sum() ** gamma
    val += float(b @ penalties.smooth.R @ b)
    return val


def constrained_objective(
    design: DesignSystem, penalties: PenaltySystem, tau: float, b, theta, y=None
) -> float:
    """Value of the convex reformulation at a given (b, theta) pair."""
    b = np.asarray(b, dtype=float)
    theta = np.asarray(theta, dtype=float)
    y = design.y if y is None else y
    r = y - design.psi @ b
    val = float(r @ r) / design.n_subjects
    gamma = penalties.weights.gamma
    for tj, cj, mask in zip(theta, penalties.weights.c, penalties.groups.masks):
        norm1 = np.abs(b[mask]).sum()
        if tj > 0:
            val += tj ** (1.0 - 1.0 / gamma) * cj ** (1.0 / gamma) * norm1
        elif norm1 > 0:
            return np.inf
        val += tau * tj
    val += float(b @ penalties.smooth.R @ b)
    return val


def solve_smooth(
    design: DesignSystem, smooth: SmoothnessPenalty, keep=None, y=None
) -> np.ndarray:
    """Penalized least squares without the bridge term: fit/N + b'Rb.

    Solves (Psi'Psi + N R) b = Psi'y, optionally restricted to the kept
    nodes with the difference rows filtered to kept-only pairs.
    """
    y = design.y if y is None else y
    K = design.psi.shape[1]
    if keep is None:
        keep = np.ones(K, dtype=bool)
    keep = np.asarray(keep, dtype=bool)
    b = np.zeros(K)
    if not np.any(keep):
        return b
    psi_s = design.psi[:, keep]
    R_s = restrict_smoothness(smooth, keep)
    A = psi_s.T @ psi_s + design.n_subjects * R_s
    rhs = psi_s.T @ y
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(
            "smooth-penalized system is singular; increase omega or reduce M"
        ) from exc
    if not np.all(np.isfinite(sol)):
        raise EstimationError("smooth-penalized solve produced non-finite values")
    b[keep] = sol
    return b


class BridgeWorkspace:
    """Cached Gram quantities for repeated bridge fits sharing one design matrix.

    Bootstrap replications and tuning paths refit the same Psi against many
    response vectors; the stacked Gram matrix is computed once here.
    """

    def __init__(self, design: DesignSystem, smooth: SmoothnessPenalty):
        self.design = design
        self.smooth = smooth
        S = _stack_smoothness(design.psi, smooth, design.n_subjects)
        self.gram = S.T @ S

    def fit(
        self,
        penalties: PenaltySystem,
        config: BridgeConfig,
        b0,
        y=None,
    ) -> BridgeState:
        design = self.design
        y = design.y if y is None else np.asarray(y, dtype=float)
        b0 = np.asarray(b0, dtype=float)
        gamma = config.gamma

        if config.lam == 0.0:
            b = solve_smooth(design, self.smooth, y=y)
            obj = penalized_objective(design, penalties, 0.0, b, y=y)
            return BridgeState(
                b=b,
                theta=np.zeros(penalties.groups.n_groups),
                g=np.zeros(b.shape[0]),
                objective_trace=[obj],
                n_outer_iters=0,
                converged=True,
            )

        tau = config.tau
        cy = design.psi.T @ y
        b = b0.copy()
        trace = [penalized_objective(design, penalties, config.lam, b, y=y)]
        theta = np.zeros(penalties.groups.n_groups)
        loads = np.zeros(b.shape[0])
        for it in range(1, config.max_outer_iters + 1):
            theta = update_theta(b, penalties.groups, penalties.weights, tau, gamma)
            loads = update_g(theta, penalties.weights, gamma, penalties.groups)
            b_new = _cd_solve(
                self.gram,
                cy,
                loads,
                design.n_subjects,
                b,
                config.lasso_max_iters,
                config.lasso_tol,
            )
            obj = penalized_objective(design, penalties, config.lam, b_new, y=y)
            trace.append(obj)
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug(
                    json.dumps(
                        {
                            "outer_iter": it,
                            "objective": obj,
                            "n_active": int(np.count_nonzero(b_new)),
                            "n_dead_groups": int(np.sum(theta == 0.0)),
                        }
                    )
                )
            rel = np.linalg.norm(b_new - b) / (1.0 + np.linalg.norm(b))
            b = b_new
            if rel < config.outer_tol:
                return BridgeState(
                    b=b,
                    theta=theta,
                    g=loads,
                    objective_trace=trace,
                    n_outer_iters=it,
                    converged=True,
                )
        raise ConvergenceError(
            f"bridge iteration did not converge in {config.max_outer_iters} "
            "outer iterations",
            trace=trace,
        )


def fit_group_bridge(
    design: DesignSystem,
    penalties: PenaltySystem,
    config: BridgeConfig,
    b0,
) -> BridgeState:
    """Run the full alternating bridge algorithm from an initial estimate."""
    if abs(config.gamma - penalties.weights.gamma) > 1e-12:
        raise ConfigError("config gamma and weight gamma differ")
    return BridgeWorkspace(design, penalties.smooth).fit(penalties, config, b0)
