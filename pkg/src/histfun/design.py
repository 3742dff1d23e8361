"""Functional samples, centering, and assembly of the stacked design system.

The design entry linking basis function k to curve i at time t is the inner
product psi_ik(t) = int_0^t x_i(s) phi_k(s, t) ds.  Curves are piecewise
linear between grid points and phi_k(., t) is piecewise linear in s, so the
integrand is piecewise quadratic and is integrated exactly with Simpson's
rule on each segment of the combined breakpoint set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DataError, DomainError
from .fem import TriangularMesh, _barycentric

__all__ = [
    "FunctionalSample",
    "CenteredData",
    "DesignSystem",
    "center",
    "compute_psi",
    "assemble",
    "read_sample_csv",
    "write_sample_csv",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FunctionalSample:
    """N curves observed on a shared ascending time grid starting at 0."""

    grid: np.ndarray
    values: np.ndarray
    role: str = "covariate"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if grid.ndim != 1 or grid.size < 2:
            raise DataError("grid must be a 1-D array with at least two points")
        if np.any(np.diff(grid) <= 0):
            raise DataError("grid must be strictly ascending")
        if abs(grid[0]) > 1e-12 * max(1.0, abs(grid[-1])):
            raise DataError("grid must start at 0")
        if values.shape[1] != grid.size:
            raise DataError(
                f"values has {values.shape[1]} columns but grid has {grid.size} points"
            )
        if values.shape[0] < 1:
            raise DataError("need at least one curve")
        if not np.all(np.isfinite(values)):
            raise DataError("curve values must be finite (dense regular design)")
        if self.role not in ("covariate", "response"):
            raise DataError(f"unknown role {self.role!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def n_curves(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])


@dataclass(frozen=True)
class CenteredData:
    """A pointwise-centered sample together with the removed mean curve."""

    centered: FunctionalSample
    mean_curve: np.ndarray


@dataclass(frozen=True)
class DesignSystem:
    """Stacked design matrix and response vector.

    Row block i, row q holds psi_ik(t_q) in column k; rows are ordered
    subject-major, time-minor.  Immutable after assembly.
    """

    psi: np.ndarray
    y: np.ndarray
    mesh: TriangularMesh
    eval_times: np.ndarray
    n_subjects: int

    @property
    def n_times(self) -> int:
        return self.eval_times.size


def center(sample: FunctionalSample) -> CenteredData:
    """Remove the pointwise mean curve across subjects."""
    if sample.n_curves < 2:
        raise DataError("centering needs at least 2 curves")
    mean_curve = sample.values.mean(axis=0)
    centered = FunctionalSample(
        grid=sample.grid, values=sample.values - mean_curve, role=sample.role
    )
    return CenteredData(centered=centered, mean_curve=mean_curve)


def _quadrature_rule(mesh: TriangularMesh, grid: np.ndarray, t_eval: float):
    """Simpson points and weights for exact integration of x * phi over [0, t].

    Breakpoints are the union of the curve grid, the vertical mesh lines
    s = i*delta, and the diagonal crossings s = t - c*delta, so both factors
    are linear on every segment.  Returns (points, weights) with three
    Simpson points per segment, or None when the interval is empty.
    """
    d = mesh.delta_step
    tol = 1e-12 * max(mesh.T, 1.0)
    if t_eval <= tol:
        return None
    verts = d * np.arange(0, mesh.M + 1)
    diags = t_eval - d * np.arange(0, mesh.M + 1)
    brk = np.concatenate([[0.0, t_eval], grid, verts, diags])
    brk = brk[(brk > -tol) & (brk < t_eval + tol)]
    brk = np.clip(brk, 0.0, t_eval)
    brk = np.unique(brk)
    keep = np.concatenate([[True], np.diff(brk) > tol])
    brk = brk[keep]
    if brk.size < 2:
        return None
    a, b = brk[:-1], brk[1:]
    h = b - a
    pts = np.concatenate([a, 0.5 * (a + b), b])
    wts = np.concatenate([h / 6.0, 4.0 * h / 6.0, h / 6.0])
    return pts, wts


def _psi_operator(mesh: TriangularMesh, grid: np.ndarray, t_eval: float):
    """Sparse (P, K) operator taking curve values at quadrature points to psi."""
    rule = _quadrature_rule(mesh, grid, t_eval)
    if rule is None:
        return None
    pts, wts = rule
    _, idx, w = _barycentric(mesh, pts, np.full(pts.shape, t_eval))
    P = pts.size
    rows = np.repeat(np.arange(P), 3)
    cols = idx.ravel()
    data = (w * wts[:, None]).ravel()
    op = sp.coo_matrix((data, (rows, cols)), shape=(P, mesh.n_nodes)).tocsr()
    return pts, op


def _interp_matrix(grid: np.ndarray, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of every curve (row) at pts."""
    seg = np.clip(np.searchsorted(grid, pts, side="right") - 1, 0, grid.size - 2)
    g0 = grid[seg]
    g1 = grid[seg + 1]
    frac = np.clip((pts - g0) / (g1 - g0), 0.0, 1.0)
    return values[:, seg] * (1.0 - frac) + values[:, seg + 1] * frac


def compute_psi(
    mesh: TriangularMesh, grid, x_values, t_eval: float
) -> np.ndarray:
    """Vector of integrals int_0^t x(s) phi_k(s, t) ds for a single curve."""
    grid = np.asarray(grid, dtype=float)
    x_values = np.asarray(x_values, dtype=float)
    tol = 1e-10 * mesh.T
    if t_eval < -tol or t_eval > mesh.T + tol:
        raise DomainError(f"t_eval={t_eval} outside [0, {mesh.T}]")
    t_eval = min(max(float(t_eval), 0.0), mesh.T)
    rule = _psi_operator(mesh, grid, t_eval)
    if rule is None:
        return np.zeros(mesh.n_nodes)
    pts, op = rule
    xs = _interp_matrix(grid, np.atleast_2d(x_values), pts)[0]
    return np.asarray(xs @ op).ravel()


def assemble(
    x: CenteredData,
    y: CenteredData,
    mesh: TriangularMesh,
    eval_times=None,
) -> DesignSystem:
    """Stack psi_ik(t_q) rows and the matching response values.

    eval_times defaults to the observation grid of y; rows at t=0 are
    all-zero.  The Riemann weight T/Q of the time integral is absorbed into
    the shrinkage parameter, so no row scaling is applied here.
    """
    xs, ys = x.centered, y.centered
    if xs.grid.shape != ys.grid.shape or not np.allclose(xs.grid, ys.grid):
        raise DataError("covariate and response grids differ")
    if xs.n_curves != ys.n_curves:
        raise DataError("covariate and response curve counts differ")
    if abs(xs.horizon - mesh.T) > 1e-10 * max(1.0, mesh.T):
        raise DataError(
            f"sample horizon {xs.horizon} does not match mesh horizon {mesh.T}"
        )
    if eval_times is None:
        eval_times = ys.grid.copy()
        y_at = ys.values
    else:
        eval_times = np.asarray(eval_times, dtype=float)
        if eval_times.size == 0:
            raise DataError("eval_times is empty")
        tol = 1e-10 * mesh.T
        if np.any(eval_times < -tol) or np.any(eval_times > mesh.T + tol):
            raise DataError("eval_times must lie inside [0, T]")
        y_at = _interp_matrix(ys.grid, ys.values, eval_times)

    N = xs.n_curves
    Q = eval_times.size
    K = mesh.n_nodes
    blocks = np.zeros((N, Q, K))
    for q, t in enumerate(eval_times):
        rule = _psi_operator(mesh, xs.grid, float(t))
        if rule is None:
            continue
        pts, op = rule
        blocks[:, q, :] = _interp_matrix(xs.grid, xs.values, pts) @ op

    psi = blocks.reshape(N * Q, K)
    yvec = y_at.reshape(N * Q)
    logger.info(
        "assembled design: N=%d, Q=%d, K=%d (%d rows)", N, Q, K, psi.shape[0]
    )
    return DesignSystem(
        psi=psi, y=yvec, mesh=mesh, eval_times=eval_times, n_subjects=N
    )


def read_sample_csv(path, role: str = "covariate") -> FunctionalSample:
    """Read a sample from CSV: first row is the grid, then one row per curve."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    if raw.shape[0] < 2:
        raise DataError(f"{path}: need a grid row plus at least one curve row")
    return FunctionalSample(grid=raw[0], values=raw[1:], role=role)


def write_sample_csv(path, sample: FunctionalSample) -> None:
    out = np.vstack([sample.grid, sample.values])
    np.savetxt(path, out, delimiter=",", fmt="%.17g")
