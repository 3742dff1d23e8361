"""Uniform triangulation of the domain {0 <= s <= t <= T} and the P1 tent basis.

The square lattice with spacing T/M is clipped to the lower-triangular domain
and every full lattice square is split by the diagonal parallel to the line
t = s.  Nodes are indexed bottom to top and, within a row, left to right, so
node 1 sits at (0, 0) and the row at height t = j*delta holds j+1 nodes.
Each node carries one continuous piecewise-linear tent function that equals 1
at its node and 0 on the boundary of the surrounding hexagon of triangles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DomainError

__all__ = [
    "TriangularMesh",
    "CoefficientSurface",
    "build_mesh",
    "node_coordinates",
    "eval_basis",
    "eval_surface",
]


@dataclass(frozen=True)
class TriangularMesh:
    """Immutable triangulation of {0 <= s <= t <= T} with M subdivisions per axis.

    nodes holds the (s, t) lattice coordinates in index order, shape (K, 2)
    with K = (M+1)(M+2)/2.  triangles holds M^2 vertex triples (0-based node
    positions) stored counterclockwise.
    """

    M: int
    T: float
    nodes: np.ndarray
    triangles: np.ndarray

    @property
    def delta_step(self) -> float:
        return self.T / self.M

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def to_json(self) -> str:
        payload = {
            "M": self.M,
            "T": self.T,
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TriangularMesh":
        payload = json.loads(text)
        mesh = build_mesh(int(payload["M"]), float(payload["T"]))
        if not np.allclose(mesh.nodes, np.asarray(payload["nodes"])):
            raise ConfigError("serialized nodes do not match a uniform mesh")
        return mesh


@dataclass(frozen=True)
class CoefficientSurface:
    """A surface sum_k b_k * phi_k(s, t) over a fixed mesh."""

    mesh: TriangularMesh
    coefficients: np.ndarray

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=float)
        if coeff.shape != (self.mesh.n_nodes,):
            raise ConfigError(
                f"expected {self.mesh.n_nodes} coefficients, got {coeff.shape}"
            )
        object.__setattr__(self, "coefficients", coeff)

    def evaluate(self, s, t):
        return eval_surface(self, s, t)


def build_mesh(M: int, T: float) -> TriangularMesh:
    """Build the uniform triangulation with M subdivisions on [0, T]."""
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise ConfigError(f"M must be a positive integer, got {M!r}")
    if not T > 0:
        raise ConfigError(f"T must be positive, got {T!r}")
    T = float(T)
    delta = T / M

    nodes = []
    for j in range(M + 1):
        for i in range(j + 1):
            nodes.append((i * delta, j * delta))
    nodes = np.asarray(nodes, dtype=float)

    # Band between rows j and j+1: full squares for i < j (two triangles,
    # lower first) and the single diagonal triangle at i = j.
    triangles = []
    for j in range(M):
        lo = j * (j + 1) // 2
        hi = (j + 1) * (j + 2) // 2
        for i in range(j):
            triangles.append((lo + i, lo + i + 1, hi + i + 1))
            triangles.append((lo + i, hi + i + 1, hi + i))
        triangles.append((lo + j, hi + j + 1, hi + j))
    triangles = np.asarray(triangles, dtype=np.int64)

    return TriangularMesh(M=int(M), T=T, nodes=nodes, triangles=triangles)


def node_coordinates(mesh: TriangularMesh, k: int) -> tuple[float, float]:
    """Coordinates of node k under the bottom-to-top indexing; k is 1-based."""
    if not 1 <= k <= mesh.n_nodes:
        raise ConfigError(f"node index {k} outside 1..{mesh.n_nodes}")
    s, t = mesh.nodes[k - 1]
    return float(s), float(t)


def _barycentric(mesh: TriangularMesh, s, t):
    """Locate points in the mesh and return barycentric weights.

    Returns (tri, idx, w): containing triangle index (n,), the three vertex
    node positions (n, 3) 0-based, and the corresponding weights (n, 3).
    Points on shared edges resolve to the lowest-index adjacent triangle;
    continuity of the basis makes the choice value-neutral.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s, t = np.broadcast_arrays(s, t)
    T, M = mesh.T, mesh.M
    tol = 1e-10 * T
    if np.any(s < -tol) or np.any(t > T + tol) or np.any(t - s < -tol):
        raise DomainError("point outside the domain 0 <= s <= t <= T")

    d = T / M
    tc = np.minimum(np.maximum(t, 0.0), T)
    sc = np.minimum(np.maximum(s, 0.0), tc)
    j = np.minimum((tc / d).astype(np.int64), M - 1)
    i = np.minimum((sc / d).astype(np.int64), j)
    u = sc / d - i
    v = tc / d - j

    lower = (i < j) & (v <= u)
    n00 = j * (j + 1) // 2 + i
    n10 = n00 + 1
    n11 = (j + 1) * (j + 2) // 2 + i + 1
    n01 = (j + 1) * (j + 2) // 2 + i

    idx_lower = np.stack([n00, n10, n11], axis=-1)
    idx_upper = np.stack([n00, n11, n01], axis=-1)
    w_lower = np.stack([1.0 - u, u - v, v], axis=-1)
    w_upper = np.stack([1.0 - v, u, v - u], axis=-1)

    sel = lower[..., None]
    idx = np.where(sel, idx_lower, idx_upper)
    w = np.clip(np.where(sel, w_lower, w_upper), 0.0, 1.0)
    tri = j * j + np.where(i < j, 2 * i + (~lower).astype(np.int64), 2 * j)
    return tri, idx, w


def eval_basis(mesh: TriangularMesh, k: int, s: float, t: float) -> float:
    """Value of tent function phi_k at (s, t); k is 1-based."""
    if not 1 <= k <= mesh.n_nodes:
        raise ConfigError(f"node index {k} outside 1..{mesh.n_nodes}")
    _, idx, w = _barycentric(mesh, s, t)
    hit = idx[0] == (k - 1)
    return float(w[0][hit].sum()) if hit.any() else 0.0


def eval_surface(surface: CoefficientSurface, s, t):
    """Evaluate sum_k b_k phi_k at (s, t); accepts scalars or arrays."""
    _, idx, w = _barycentric(surface.mesh, s, t)
    vals = np.sum(surface.coefficients[idx] * w, axis=-1)
    if np.isscalar(s) and np.isscalar(t):
        return float(vals[0])
    return vals
