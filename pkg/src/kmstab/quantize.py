"""Distortion, Lloyd iterations and exact k-means solvers for discrete measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import TOL_GEO, Codebook, as_codebook, nn_assign_many, squared_distances
from .measures import DiscreteMeasure

CERTIFIED_UNIQUE = "certified_unique"
MULTIPLE_OPTIMA = "multiple_optima"
UNKNOWN = "unknown"

N_MAX_ENUM = 14
MAX_PARTITIONS = 3_000_000


def _check_dim(P: DiscreteMeasure, c: Codebook) -> None:
    if P.dim != c.dim:
        raise ValueError(f"dimension mismatch: measure in R^{P.dim}, codebook in R^{c.dim}")


def risk(P: DiscreteMeasure, c) -> float:
    """Expected squared distance of a P-distributed point to its nearest center."""
    c = as_codebook(c)
    _check_dim(P, c)
    return float(P.weights @ squared_distances(P.support, c).min(axis=1))


def centroid(P: DiscreteMeasure, cell) -> np.ndarray:
    """Weighted mean of the atoms selected by ``cell`` (boolean mask or indices)."""
    idx = np.asarray(cell)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    w = P.weights[idx]
    total = w.sum()
    if idx.size == 0 or total <= 0:
        raise ValueError("centroid of a cell with zero mass")
    return (w @ P.support[idx]) / total


@dataclass(frozen=True)
class LloydConfig:
    max_iter: int = 200
    rel_tol: float = 1e-10
    init: object = "kmeans++"  # or an explicit Codebook
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not (isinstance(self.init, str) and self.init == "kmeans++"):
            as_codebook(self.init)


@dataclass
class SolveResult:
    codebook: Codebook
    risk: float
    iterations: int
    converged: bool
    unique_flag: str = UNKNOWN
    witness: Codebook | None = None
    history: list[float] = field(default_factory=list)

    @property
    def certified_unique(self) -> bool:
        return self.unique_flag == CERTIFIED_UNIQUE


# -- Lloyd --------------------------------------------------------------------


def kmeans_pp(P: DiscreteMeasure, k: int, rng: np.random.Generator) -> np.ndarray:
    """Weighted k-means++ seeding over the atoms of ``P``."""
    X, w = P.support, P.weights
    chosen = [int(rng.choice(P.n, p=w / w.sum()))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        score = w * d2
        total = score.sum()
        if total <= 0:
            raise ValueError("k-means++ ran out of distinct atoms")
        nxt = int(rng.choice(P.n, p=score / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _repair(P: DiscreteMeasure, centers: np.ndarray, labels: np.ndarray, counts: np.ndarray) -> None:
    """Re-seed empty or duplicated centers at the atom contributing most to the risk."""
    dead = [j for j in range(centers.shape[0]) if counts[j] <= 0]
    _, first = np.unique(centers, axis=0, return_index=True)
    dead += [j for j in range(centers.shape[0]) if j not in set(first.tolist()) and j not in dead]
    for j in dead:
        d2 = squared_distances(P.support, Codebook(_dedupe_for_distance(centers, j))).min(axis=1)
        contrib = P.weights * d2
        i = int(np.argmax(contrib))
        if contrib[i] <= 0:
            raise ValueError("cannot repair an empty Lloyd cell: all atoms are centers")
        centers[j] = P.support[i]


def _dedupe_for_distance(centers: np.ndarray, skip: int) -> np.ndarray:
    rest = np.delete(centers, skip, axis=0)
    return np.unique(rest, axis=0)


def _lloyd_once(P: DiscreteMeasure, init: np.ndarray, cfg: LloydConfig) -> SolveResult:
    centers = np.array(init, dtype=float)
    k = centers.shape[0]
    prev = risk(P, Codebook(centers))
    history = [prev]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        labels = nn_assign_many(P.support, centers)
        counts = np.bincount(labels, weights=P.weights, minlength=k)
        new = centers.copy()
        for j in range(k):
            if counts[j] > 0:
                new[j] = centroid(P, labels == j)
        if np.any(counts <= 0) or np.unique(new, axis=0).shape[0] < k:
            _repair(P, new, labels, counts)
        cur = risk(P, Codebook(new))
        centers = new
        history.append(cur)
        if prev - cur <= cfg.rel_tol * prev or cur == 0.0:
            converged = True
            break
        prev = cur
    cb = Codebook(centers)
    return SolveResult(cb, risk(P, cb), it, converged, UNKNOWN, None, history)


def lloyd(P: DiscreteMeasure, k: int, cfg: LloydConfig | None = None) -> SolveResult:
    """Best of ``cfg.restarts`` Lloyd runs; ties go to the lexicographically smaller codebook."""
    cfg = cfg or LloydConfig()
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > P.n:
        raise ValueError(f"k={k} exceeds the support size {P.n}")
    if not isinstance(cfg.init, str):
        init = as_codebook(cfg.init)
        if init.k != k or init.dim != P.dim:
            raise ValueError("explicit init codebook has the wrong shape")
        return _lloyd_once(P, init.centers, cfg)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    runs = [_lloyd_once(P, kmeans_pp(P, k, np.random.default_rng(s)), cfg) for s in seeds]
    return min(runs, key=lambda r: (r.risk, r.codebook.sorted().tolist()))


# -- exact solvers ------------------------------------------------------------


def _interval_cost(W, S, Q, i, j):
    """Weighted within-cluster squared error of sorted atoms i..j-1 via prefix sums."""
    w = W[j] - W[i]
    s = S[j] - S[i]
    return max(Q[j] - Q[i] - s * s / w, 0.0)


def exact_optimal_1d(P: DiscreteMeasure, k: int, tol: float = TOL_GEO) -> SolveResult:
    """Globally optimal k-means on the line by dynamic programming over sorted atoms."""
    if P.dim != 1:
        raise ValueError("exact_optimal_1d needs a one-dimensional measure")
    n = P.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    x = P.support[:, 0]  # already sorted by construction
    w = P.weights
    W = np.concatenate([[0.0], np.cumsum(w)])
    S = np.concatenate([[0.0], np.cumsum(w * x)])
    Q = np.concatenate([[0.0], np.cumsum(w * x * x)])

    cost = np.full((k + 1, n + 1), np.inf)
    cost[0, 0] = 0.0
    for m in range(1, k + 1):
        for j in range(m, n - (k - m) + 1):
            cost[m, j] = min(cost[m - 1, i] + _interval_cost(W, S, Q, i, j) for i in range(m - 1, j))
    best = cost[k, n]

    # walk every backtrace whose total stays within tol of the optimum, stop at two
    found: list[list[int]] = []

    def walk(m, j, slack, cuts):
        if len(found) >= 2:
            return
        if m == 0:
            if j == 0:
                found.append(cuts[::-1])
            return
        for i in range(m - 1, j):
            excess = cost[m - 1, i] + _interval_cost(W, S, Q, i, j) - cost[m, j]
            if excess <= slack:
                walk(m - 1, i, slack - max(excess, 0.0), cuts + [i])

    walk(k, n, tol, [])
    books = [_interval_codebook(P, cuts + [n]) for cuts in found]
    cb = books[0]
    distinct = [b for b in books[1:] if b.sorted() != cb.sorted()]
    flag = MULTIPLE_OPTIMA if distinct else CERTIFIED_UNIQUE
    return SolveResult(cb, risk(P, cb), 1, True, flag, distinct[0] if distinct else None, [float(best)])


def _interval_codebook(P: DiscreteMeasure, bounds: list[int]) -> Codebook:
    centers = [centroid(P, np.arange(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]
    return Codebook(centers)


@lru_cache(maxsize=32)
def set_partitions(n: int, k: int) -> np.ndarray:
    """All partitions of n labelled items into exactly k blocks, as restricted growth strings."""
    if not 1 <= k <= n:
        raise ValueError(f"no partitions of {n} items into {k} blocks")
    count = _stirling2(n, k)
    if count > MAX_PARTITIONS:
        raise ValueError(f"{count} partitions of {n} atoms into {k} cells exceed the enumeration guard")
    rows = np.zeros((1, 1), dtype=np.int8)
    for pos in range(1, n):
        top = rows.max(axis=1)
        remaining = n - pos - 1
        parts = []
        for v in range(min(pos, k - 1) + 1):
            ok = v <= top + 1
            # enough positions left to open the missing blocks
            opened = np.maximum(top, v) + 1
            ok &= (k - opened) <= remaining
            if ok.any():
                sel = rows[ok]
                parts.append(np.hstack([sel, np.full((sel.shape[0], 1), v, dtype=np.int8)]))
        rows = np.vstack(parts)
    rows = rows[rows.max(axis=1) == k - 1]
    rows.setflags(write=False)
    return rows


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def exact_optimal_enum(P: DiscreteMeasure, k: int, tol: float = TOL_GEO, n_max: int = N_MAX_ENUM) -> SolveResult:
    """Globally optimal k-means by scoring every partition of the atoms into k cells."""
    n = P.n
    if n > n_max:
        raise ValueError(f"support size {n} exceeds the enumeration limit n_max={n_max}")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    labels = set_partitions(n, k)
    X, w = P.support, P.weights
    total = np.zeros(labels.shape[0])
    wx = w[:, None] * X
    wxx = w * (X * X).sum(axis=1)
    for j in range(k):
        member = (labels == j).astype(float)
        mass = member @ w
        first = member @ wx
        second = member @ wxx
        total += second - (first * first).sum(axis=1) / mass
    order = np.argsort(total, kind="stable")
    best = total[order[0]]
    ties = order[total[order] <= best + tol]

    books = []
    for row in ties[: min(len(ties), 8)]:
        books.append(Codebook([centroid(P, labels[row] == j) for j in range(k)]))
    cb = books[0]
    if not np.array_equal(nn_assign_many(X, cb, tol), labels[ties[0]]):
        raise RuntimeError("optimal partition is not Voronoi-consistent; tolerance too loose?")
    distinct = [b for b in books[1:] if b.sorted() != cb.sorted()]
    flag = MULTIPLE_OPTIMA if distinct else CERTIFIED_UNIQUE
    return SolveResult(cb, risk(P, cb), 1, True, flag, distinct[0] if distinct else None, [float(best)])


def solve_exact(P: DiscreteMeasure, k: int, tol: float = TOL_GEO, n_max: int = N_MAX_ENUM) -> SolveResult:
    """Exact optimum by the cheapest applicable oracle."""
    if P.dim == 1:
        return exact_optimal_1d(P, k, tol)
    return exact_optimal_enum(P, k, tol, n_max)


def enumerable(P: DiscreteMeasure, k: int, n_max: int = N_MAX_ENUM) -> bool:
    return P.n <= n_max and 1 <= k <= P.n and _stirling2(P.n, k) <= MAX_PARTITIONS


def solve(P: DiscreteMeasure, k: int, cfg: LloydConfig | None = None, tol: float = TOL_GEO) -> SolveResult:
    """Exact when an oracle applies, otherwise best-of-restarts Lloyd (``unique_flag`` unknown)."""
    if P.dim == 1 or enumerable(P, k):
        return solve_exact(P, k, tol)
    return lloyd(P, k, cfg)


def center_condition_gap(P: DiscreteMeasure, c) -> float:
    """Largest risk decrease from moving one center to its cell centroid (0 at a fixed point)."""
    c = as_codebook(c)
    base = risk(P, c)
    labels = nn_assign_many(P.support, c)
    gap = 0.0
    for j in range(c.k):
        cell = labels == j
        if not cell.any():
            continue
        moved = c.centers.copy()
        moved[j] = centroid(P, cell)
        if np.unique(moved, axis=0).shape[0] < c.k:
            continue
        gap = max(gap, base - risk(P, moved))
    return gap


def cell_masses(P: DiscreteMeasure, c) -> np.ndarray:
    c = as_codebook(c)
    return np.bincount(nn_assign_many(P.support, c), weights=P.weights, minlength=c.k)


def isclose_risk(a: float, b: float, tol: float = TOL_GEO) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
