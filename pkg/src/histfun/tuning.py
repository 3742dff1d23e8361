"""BIC-based selection of the shrinkage and smoothness tuning parameters."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .design import DesignSystem
from .exceptions import ConvergenceError, TuningError
from .penalties import (
    PenaltySystem,
    build_groups,
    build_smoothness,
    restrict_smoothness,
)
from .solver import BridgeConfig, BridgeWorkspace

__all__ = [
    "TuningGrid",
    "FitCandidate",
    "effective_df",
    "bic",
    "grid_search",
    "make_penalty_builder",
]

logger = logging.getLogger(__name__)

_BIC_FLOOR = -1e300


@dataclass
class TuningGrid:
    """Candidate shrinkage values and smoothness-weight triples.

    records is filled by grid_search with one entry per candidate and is
    sorted by BIC on completion.
    """

    lambdas: np.ndarray
    omegas: list
    records: list = field(default_factory=list)

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if self.lambdas.size == 0 or len(self.omegas) == 0:
            raise TuningError("tuning grids must be nonempty")
        self.omegas = [
            (w, w, w) if np.isscalar(w) else tuple(float(v) for v in w)
            for w in self.omegas
        ]

    @classmethod
    def default(cls) -> "TuningGrid":
        return cls(
            lambdas=np.logspace(-4, 1, 8),
            omegas=list(np.logspace(-6, -1, 4)),
        )


@dataclass
class FitCandidate:
    """One evaluated (lambda, omega) candidate."""

    lam: float
    omega: tuple
    state: object
    b0: np.ndarray
    delta_group: int | None
    df: float
    bic: float
    rss: float
    n_active: int


def effective_df(
    design: DesignSystem, penalties: PenaltySystem, active, N: int
) -> float:
    """Trace of the hat-type matrix restricted to the active coefficients."""
    active = np.asarray(active)
    if active.dtype == bool:
        keep = active
    else:
        keep = np.zeros(design.psi.shape[1], dtype=bool)
        keep[active] = True
    if not np.any(keep):
        return 0.0
    psi_s = design.psi[:, keep]
    R_s = restrict_smoothness(penalties.smooth, keep)
    PtP = psi_s.T @ psi_s
    A = PtP + N * R_s
    try:
        sol = np.linalg.solve(A, PtP)
    except np.linalg.LinAlgError as exc:
        raise TuningError(
            "effective-df system is singular; increase omega or the ridge"
        ) from exc
    return float(np.trace(sol))


def bic(design: DesignSystem, b_hat, df: float, N: int) -> float:
    """N log(RSS/N) + log(N) df, with N the subject count."""
    b_hat = np.asarray(b_hat, dtype=float)
    r = design.y - design.psi @ b_hat
    rss = float(r @ r)
    if rss <= 0.0:
        warnings.warn("zero residual norm; returning the BIC sentinel")
        return _BIC_FLOOR
    return N * np.log(rss / N) + np.log(N) * df


def make_penalty_builder(mesh, gamma: float, weights_mode: str = "adaptive"):
    """Factory for penalty systems at varying omega, caching mesh artifacts."""
    from .estimator import _group_weights

    groups = build_groups(mesh)
    cache: dict = {}

    def builder(omega, b0=None) -> PenaltySystem:
        key = tuple(omega) if not np.isscalar(omega) else (omega,) * 3
        if key not in cache:
            cache[key] = build_smoothness(mesh, omega)
        smooth = cache[key]
        if b0 is None:
            weights = _group_weights(groups, gamma, None, "simple")
        else:
            weights = _group_weights(groups, gamma, b0, weights_mode)
        return PenaltySystem(groups=groups, weights=weights, smooth=smooth)

    return builder


def grid_search(
    design: DesignSystem,
    penalty_builder,
    grid: TuningGrid,
    config: BridgeConfig,
):
    """Fit every candidate and return the BIC-minimizing (lambda, omega, fit).

    Every candidate starts from the penalized least squares initializer
    rather than the neighbouring lambda's solution: group death is absorbing
    under the scale update, so a warm start from a sparser fit could never
    resurrect a group and would bias smaller-lambda candidates.
    """
    from dataclasses import replace

    from .estimator import _first_dead_group, ols_initial

    grid.records.clear()
    lams = np.sort(grid.lambdas)[::-1]
    N = design.n_subjects
    failures = []
    for omega in grid.omegas:
        pen_probe = penalty_builder(omega)
        b0 = ols_initial(design, pen_probe.smooth.R)
        pen = penalty_builder(omega, b0)
        workspace = BridgeWorkspace(design, pen.smooth)
        for lam in lams:
            cfg = replace(config, lam=float(lam))
            try:
                state = workspace.fit(pen, cfg, b0)
            except ConvergenceError as exc:
                failures.append((lam, omega, exc))
                logger.warning("candidate lam=%g omega=%s failed: %s", lam, omega, exc)
                continue
            active = np.flatnonzero(state.b)
            try:
                df = effective_df(design, pen, active, N)
            except TuningError:
                df = float(active.size)
            score = bic(design, state.b, df, N)
            r = design.y - design.psi @ state.b
            grid.records.append(
                FitCandidate(
                    lam=float(lam),
                    omega=tuple(pen.smooth.omega),
                    state=state,
                    b0=b0,
                    delta_group=_first_dead_group(state.b, pen.groups, None),
                    df=df,
                    bic=score,
                    rss=float(r @ r),
                    n_active=int(active.size),
                )
            )
    if not grid.records:
        raise TuningError(
            f"all {len(failures)} tuning candidates failed; first failure: "
            f"{failures[0][2] if failures else 'empty grid'}"
        )
    best = min(grid.records, key=lambda rec: (rec.bic, -rec.lam))
    grid.records.sort(key=lambda rec: (rec.bic, -rec.lam))
    return best.lam, best.omega, best
