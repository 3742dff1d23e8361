"""Nested node groups, group weights, and directional difference penalties.

Group j collects the nodes on or above the line t = s + (j-1)*delta, i.e. the
closed triangle with vertices (0, T), (0, (j-1)*delta), ((M+1-j)*delta, T).
The groups are strictly nested and the last one holds only the apex (0, T).
Difference matrices pair lattice-adjacent nodes along the horizontal,
vertical, and diagonal (parallel to t = s) directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, WeightError
from .fem import TriangularMesh

__all__ = [
    "NestedGroups",
    "SmoothnessPenalty",
    "GroupWeights",
    "PenaltySystem",
    "build_groups",
    "build_difference_matrices",
    "assemble_R",
    "build_smoothness",
    "compute_weights",
    "restrict_smoothness",
    "build_penalty_system",
]


@dataclass(frozen=True)
class NestedGroups:
    """Decreasing groups A_1 > ... > A_{M+1} of node indices.

    groups lists 1-based node indices, each group ordered by decreasing
    distance t - s from the concurrent line and then by node index (the
    ordering used when the groups are written out for M = 3).  masks holds
    the same sets as boolean arrays over the K nodes, for computation.
    membership_count[k] is the number of groups containing node k+1.
    """

    groups: tuple
    masks: np.ndarray
    membership_count: np.ndarray
    region_triangles: tuple

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def sizes(self) -> np.ndarray:
        return self.masks.sum(axis=1)


@dataclass(frozen=True)
class SmoothnessPenalty:
    """Directional difference matrices and the combined quadratic penalty R."""

    horizontal: np.ndarray
    vertical: np.ndarray
    diagonal: np.ndarray
    omega: tuple
    R: np.ndarray

    def matrices(self):
        return (self.horizontal, self.vertical, self.diagonal)


@dataclass(frozen=True)
class GroupWeights:
    """Per-group penalty weights c_j and the bridge exponent gamma."""

    c: np.ndarray
    gamma: float


@dataclass(frozen=True)
class PenaltySystem:
    groups: NestedGroups
    weights: GroupWeights
    smooth: SmoothnessPenalty


def build_groups(mesh: TriangularMesh) -> NestedGroups:
    """Nested groups of nodes on/above the lines t = s + (j-1)*delta."""
    M = mesh.M
    d = mesh.delta_step
    tol = 1e-10 * mesh.T
    band = mesh.nodes[:, 1] - mesh.nodes[:, 0]

    # Listing order inside a group: decreasing t-s, then increasing index.
    order = np.lexsort((np.arange(mesh.n_nodes), -np.round(band / d).astype(int)))

    groups = []
    masks = np.zeros((M + 1, mesh.n_nodes), dtype=bool)
    for j in range(1, M + 2):
        mask = band >= (j - 1) * d - tol
        masks[j - 1] = mask
        members = [int(k) + 1 for k in order if mask[k]]
        groups.append(tuple(members))

    membership = np.floor(band / d + 0.5).astype(int) + 1

    regions = []
    for j in range(1, M + 1):
        regions.append(((0.0, mesh.T), (0.0, (j - 1) * d), ((M + 1 - j) * d, mesh.T)))
    regions.append(((0.0, mesh.T),))

    return NestedGroups(
        groups=tuple(groups),
        masks=masks,
        membership_count=membership,
        region_triangles=tuple(regions),
    )


def build_difference_matrices(mesh: TriangularMesh):
    """Adjacent-node difference matrices (horizontal, vertical, diagonal).

    Each row has -1 on the lower-index node and +1 on its neighbour.  Rows
    scan the lattice bottom to top, left to right.
    """
    M = mesh.M
    K = mesh.n_nodes

    def node(i, j):
        return j * (j + 1) // 2 + i

    h_rows, v_rows, p_rows = [], [], []
    for j in range(M + 1):
        for i in range(j + 1):
            if i + 1 <= j:
                h_rows.append((node(i, j), node(i + 1, j)))
            if j + 1 <= M:
                v_rows.append((node(i, j), node(i, j + 1)))
                p_rows.append((node(i, j), node(i + 1, j + 1)))

    def to_matrix(pairs):
        D = np.zeros((len(pairs), K))
        for r, (a, b) in enumerate(pairs):
            D[r, a] = -1.0
            D[r, b] = 1.0
        return D

    return to_matrix(h_rows), to_matrix(v_rows), to_matrix(p_rows)


def assemble_R(d_h: np.ndarray, d_v: np.ndarray, d_p: np.ndarray, omega) -> np.ndarray:
    """Combine the three directional penalties with nonnegative weights."""
    omega = tuple(float(w) for w in omega)
    if len(omega) != 3 or any(w < 0 for w in omega):
        raise ConfigError(f"omega must be three nonnegative weights, got {omega!r}")
    w_h, w_v, w_p = omega
    return w_h * d_h.T @ d_h + w_v * d_v.T @ d_v + w_p * d_p.T @ d_p


def build_smoothness(mesh: TriangularMesh, omega) -> SmoothnessPenalty:
    if np.isscalar(omega):
        omega = (omega, omega, omega)
    d_h, d_v, d_p = build_difference_matrices(mesh)
    R = assemble_R(d_h, d_v, d_p, omega)
    return SmoothnessPenalty(
        horizontal=d_h,
        vertical=d_v,
        diagonal=d_p,
        omega=tuple(float(w) for w in omega),
        R=R,
    )


def compute_weights(
    groups: NestedGroups, gamma: float, b0=None
) -> GroupWeights:
    """Group weights |A_j|^(1-gamma), optionally adapted by a pilot estimate.

    With a pilot vector b0 the weight becomes |A_j|^(1-gamma) / ||b0_Aj||_2^gamma.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    sizes = groups.sizes().astype(float)
    c = sizes ** (1.0 - gamma)
    if b0 is not None:
        b0 = np.asarray(b0, dtype=float)
        norms = np.array([np.linalg.norm(b0[m]) for m in groups.masks])
        if np.any(norms <= 0):
            raise WeightError(
                "a pilot group norm is zero; fall back to simple size-based weights"
            )
        c = c / norms**gamma
    return GroupWeights(c=c, gamma=float(gamma))


def restrict_smoothness(smooth: SmoothnessPenalty, keep: np.ndarray) -> np.ndarray:
    """Quadratic penalty over the kept nodes only.

    A difference row survives iff both of its endpoints are kept; a row
    touching an excluded node would degenerate into a ridge on the kept
    endpoint and change the penalty's meaning.
    """
    keep = np.asarray(keep, dtype=bool)
    R = np.zeros((int(keep.sum()), int(keep.sum())))
    for D, w in zip(smooth.matrices(), smooth.omega):
        if w == 0 or D.shape[0] == 0:
            continue
        rows = ~np.any(D[:, ~keep] != 0, axis=1)
        Ds = D[np.ix_(rows, keep)]
        R += w * Ds.T @ Ds
    return R


def build_penalty_system(
    mesh: TriangularMesh, gamma: float, omega, b0=None
) -> PenaltySystem:
    groups = build_groups(mesh)
    smooth = build_smoothness(mesh, omega)
    weights = compute_weights(groups, gamma, b0)
    return PenaltySystem(groups=groups, weights=weights, smooth=smooth)
