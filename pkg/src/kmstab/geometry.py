"""Voronoi geometry of nearest-neighbour quantizers in R^d.

Cell indices are 0-based throughout. Ties between equidistant centers are
broken toward the lowest index, using an absolute tolerance on squared
distance differences (``TOL_GEO``), so every codebook induces a genuine
partition of space.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

TOL_GEO = 1e-9


class Codebook:
    """An ordered set of k pairwise distinct centers of equal dimension."""

    __slots__ = ("centers",)

    def __init__(self, centers):
        arr = np.array(centers, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"codebook must be a non-empty (k, d) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("codebook coordinates must be finite")
        if arr.shape[0] > 1 and _min_pairwise(arr) <= 0.0:
            raise ValueError("codebook centers must be pairwise distinct")
        arr.setflags(write=False)
        self.centers = arr

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def m(self) -> float:
        """Smallest distance between two centers."""
        if self.k < 2:
            raise ValueError("m(c) needs at least two centers")
        return _min_pairwise(self.centers)

    @property
    def M(self) -> float:
        """Largest distance between two centers."""
        if self.k < 2:
            raise ValueError("M(c) needs at least two centers")
        return float(pdist(self.centers).max())

    def __len__(self) -> int:
        return self.k

    def __getitem__(self, i):
        return self.centers[i]

    def __iter__(self):
        return iter(self.centers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.centers.shape == other.centers.shape and bool(np.all(self.centers == other.centers))

    def __hash__(self) -> int:
        return hash(self.centers.tobytes())

    def __repr__(self) -> str:
        return f"Codebook({self.centers.tolist()!r})"

    def tolist(self) -> list[list[float]]:
        return self.centers.tolist()

    def sorted(self) -> "Codebook":
        """Same set of centers in lexicographic order."""
        order = np.lexsort(self.centers.T[::-1])
        return Codebook(self.centers[order])


def as_codebook(c) -> Codebook:
    return c if isinstance(c, Codebook) else Codebook(c)


def _min_pairwise(arr: np.ndarray) -> float:
    return float(pdist(arr).min())


def _as_point(x, dim: int) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.shape[0] != dim:
        raise ValueError(f"dimension mismatch: point has {p.shape[0]} coordinates, codebook has {dim}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def _as_points(X, dim: int) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"dimension mismatch: points of shape {arr.shape}, codebook dimension {dim}")
    return arr


def squared_distances(X, c) -> np.ndarray:
    """(n, k) matrix of squared distances from points to centers."""
    c = as_codebook(c)
    X = _as_points(X, c.dim)
    diff = X[:, None, :] - c.centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def nn_assign_many(X, c, tol: float = TOL_GEO) -> np.ndarray:
    """Nearest-center index for each row of ``X`` (lowest index wins ties)."""
    d2 = squared_distances(X, c)
    best = d2.min(axis=1, keepdims=True)
    return np.argmax(d2 <= best + tol, axis=1)


def nn_assign(x, c, tol: float = TOL_GEO) -> int:
    c = as_codebook(c)
    p = _as_point(x, c.dim)
    return int(nn_assign_many(p[None, :], c, tol)[0])


def bisector_margin(x, c, i: int, j: int) -> float:
    """Signed distance from ``x`` to the bisector of c_i and c_j, positive on c_i's side."""
    if i == j:
        raise ValueError("bisector_margin needs two distinct cells")
    c = as_codebook(c)
    p = _as_point(x, c.dim)
    gap = c.centers[j] - c.centers[i]
    norm = math.sqrt(float(gap @ gap))
    return norm / 2.0 - float((p - c.centers[i]) @ gap) / norm


def _margins(X: np.ndarray, c: Codebook, labels: np.ndarray) -> np.ndarray:
    """(n, k) bisector margins of each point against every other cell; +inf on own cell."""
    own = c.centers[labels]
    gaps = c.centers[None, :, :] - own[:, None, :]
    norms = np.sqrt(np.einsum("ijk,ijk->ij", gaps, gaps))
    proj = np.einsum("ik,ijk->ij", X - own, gaps)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = norms / 2.0 - proj / norms
    out[np.arange(X.shape[0]), labels] = np.inf
    return out


def frontier_distance_many(X, c, tol: float = TOL_GEO) -> np.ndarray:
    c = as_codebook(c)
    if c.k < 2:
        raise ValueError("a single-center codebook has an empty frontier")
    X = _as_points(X, c.dim)
    labels = nn_assign_many(X, c, tol)
    return np.maximum(_margins(X, c, labels).min(axis=1), 0.0)


def frontier_distance(x, c, tol: float = TOL_GEO) -> float:
    """Distance from ``x`` to the frontier of the Voronoi diagram of ``c``.

    Computed as the smallest bisector margin against the cells other than the
    one ``x`` is assigned to. In degenerate layouts (a bisector hyperplane
    whose shared face is empty) this can underestimate the true distance.
    """
    c = as_codebook(c)
    p = _as_point(x, c.dim)
    return float(frontier_distance_many(p[None, :], c, tol)[0])


def lambda_max_many(X, c, tol: float = TOL_GEO) -> np.ndarray:
    c = as_codebook(c)
    if c.k < 2:
        raise ValueError("lambda_max needs at least two centers")
    X = _as_points(X, c.dim)
    labels = nn_assign_many(X, c, tol)
    own = c.centers[labels]
    gaps = c.centers[None, :, :] - own[:, None, :]
    gap2 = np.einsum("ijk,ijk->ij", gaps, gaps)
    proj = np.einsum("ik,ijk->ij", X - own, gaps)
    out = np.full((X.shape[0], c.k), np.inf)
    pos = proj > 0
    out[pos] = gap2[pos] / (2.0 * proj[pos]) - 1.0
    lam = out.min(axis=1)
    # frontier points: the lowest-index tie-break leaves them with a zero margin
    on_frontier = _margins(X, c, labels).min(axis=1) <= 0.0
    lam[on_frontier] = 0.0
    return np.maximum(lam, 0.0)


def lambda_max(x, c, tol: float = TOL_GEO) -> float:
    """Largest push factor lambda keeping x + lambda (x - q(x)) in the cell of ``x``.

    Returns ``math.inf`` when no push, however large, changes the cell, and 0
    for points on the frontier.
    """
    c = as_codebook(c)
    p = _as_point(x, c.dim)
    return float(lambda_max_many(p[None, :], c, tol)[0])


def inflate(X, c, lam: float, tol: float = TOL_GEO) -> np.ndarray:
    """Push each point away from its own center: x + lam (x - q(x))."""
    c = as_codebook(c)
    X = _as_points(X, c.dim)
    own = c.centers[nn_assign_many(X, c, tol)]
    return X + lam * (X - own)


def in_A_lambda_many(X, c, lam: float, tol: float = TOL_GEO) -> np.ndarray:
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    c = as_codebook(c)
    X = _as_points(X, c.dim)
    if lam == 0 or c.k == 1:
        return np.ones(X.shape[0], dtype=bool)
    return lam <= lambda_max_many(X, c, tol)


def in_A_lambda(x, c, lam: float, tol: float = TOL_GEO) -> bool:
    """Whether pushing ``x`` by factor ``lam`` away from its center keeps its cell."""
    c = as_codebook(c)
    p = _as_point(x, c.dim)
    return bool(in_A_lambda_many(p[None, :], c, lam, tol)[0])


def in_A_lambda_direct(X, c, lam: float, tol: float = TOL_GEO) -> np.ndarray:
    """Membership in A(lambda) by re-assigning the pushed points."""
    c = as_codebook(c)
    X = _as_points(X, c.dim)
    return nn_assign_many(inflate(X, c, lam, tol), c, tol) == nn_assign_many(X, c, tol)


def is_center(X, c, atol: float = 0.0) -> np.ndarray:
    d2 = squared_distances(X, as_codebook(c))
    return d2.min(axis=1) <= atol


def bounding_radius(points: Sequence) -> tuple[np.ndarray, float]:
    """Center and radius of a ball containing ``points`` (box-centred, not minimal)."""
    arr = np.asarray(points, dtype=float)
    mid = (arr.min(axis=0) + arr.max(axis=0)) / 2.0
    return mid, float(np.sqrt(((arr - mid) ** 2).sum(axis=1).max()))
