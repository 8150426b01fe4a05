"""Distances between quantizers and margin profiles of an optimal codebook.

Permutations are returned as tuples ``sigma`` with ``sigma[j]`` the index in
the second codebook matched to center ``j`` of the reference codebook.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import (
    TOL_GEO,
    Codebook,
    as_codebook,
    frontier_distance_many,
    inflate,
    in_A_lambda_many,
    lambda_max_many,
    nn_assign_many,
)
from .measures import DiscreteMeasure
from .quantize import N_MAX_ENUM, risk, set_partitions

ENUM_K_MAX = 10


class MarginWarning(UserWarning):
    """An atom sits on the frontier, so the absolute margin condition fails."""


@lru_cache(maxsize=ENUM_K_MAX + 1)
def _perms(k: int) -> np.ndarray:
    arr = np.array(list(itertools.permutations(range(k))), dtype=np.int8).reshape(-1, k)
    arr.setflags(write=False)
    return arr


def _pair(cstar, c) -> tuple[Codebook, Codebook]:
    cstar, c = as_codebook(cstar), as_codebook(c)
    if cstar.dim != c.dim:
        raise ValueError(f"dimension mismatch: R^{cstar.dim} vs R^{c.dim}")
    return cstar, c


def _distance_matrix(a: Codebook, b: Codebook) -> np.ndarray:
    diff = a.centers[:, None, :] - b.centers[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _resolve_method(method: str, k: int) -> str:
    if method == "auto":
        return "enumerate" if k <= ENUM_K_MAX else "assignment"
    if method not in ("enumerate", "assignment"):
        raise ValueError(f"unknown method {method!r}")
    if method == "enumerate" and k > ENUM_K_MAX:
        raise ValueError(f"enumeration limited to k <= {ENUM_K_MAX}")
    return method


def f1(cstar, c, method: str = "auto") -> tuple[float, tuple[int, ...]]:
    """Bottleneck matching distance between two codebooks and an optimal matching."""
    cstar, c = _pair(cstar, c)
    if cstar.k != c.k:
        raise ValueError(f"codebooks have different sizes ({cstar.k} vs {c.k})")
    k = cstar.k
    D = _distance_matrix(cstar, c)
    if _resolve_method(method, k) == "enumerate":
        perms = _perms(k)
        worst = D[np.arange(k), perms].max(axis=1)
        best = int(np.argmin(worst))
        return float(worst[best]), tuple(int(v) for v in perms[best])
    return _bottleneck(D)


def _bottleneck(D: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Threshold search: the smallest entry admitting a perfect matching among entries below it."""
    levels = np.unique(D)
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_below(D, levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    rows, cols = linear_sum_assignment((D > levels[lo]).astype(float))
    sigma = np.empty(D.shape[0], dtype=int)
    sigma[rows] = cols
    return float(D[np.arange(D.shape[0]), sigma].max()), tuple(int(v) for v in sigma)


def _perfect_below(D: np.ndarray, thr: float) -> bool:
    allowed = (D <= thr).astype(float)
    rows, cols = linear_sum_assignment(-allowed)
    return bool(allowed[rows, cols].sum() == D.shape[0])


def hausdorff(cstar, c) -> float:
    """Hausdorff distance between the two center sets (sizes may differ)."""
    cstar, c = _pair(cstar, c)
    D = _distance_matrix(cstar, c)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def confusion(P: DiscreteMeasure, cstar, c) -> np.ndarray:
    """P-mass of V_i(cstar) intersected with V_j(c), as a (k*, k) matrix."""
    cstar, c = _pair(cstar, c)
    if P.dim != cstar.dim:
        raise ValueError("measure and codebooks differ in dimension")
    a = nn_assign_many(P.support, cstar)
    b = nn_assign_many(P.support, c)
    out = np.zeros((cstar.k, c.k))
    np.add.at(out, (a, b), P.weights)
    return out


def f2(P: DiscreteMeasure, cstar, c, method: str = "auto") -> tuple[float, tuple[int, ...]]:
    """Smallest misclassified mass over relabelings of ``c``, and a relabeling achieving it."""
    cstar, c = _pair(cstar, c)
    if cstar.k != c.k:
        raise ValueError(f"codebooks have different sizes ({cstar.k} vs {c.k})")
    k = cstar.k
    C = confusion(P, cstar, c)
    if _resolve_method(method, k) == "enumerate":
        perms = _perms(k)
        kept = C[np.arange(k), perms].sum(axis=1)
        best = int(np.argmax(kept))
        sigma = tuple(int(v) for v in perms[best])
    else:
        rows, cols = linear_sum_assignment(-C)
        arr = np.empty(k, dtype=int)
        arr[rows] = cols
        sigma = tuple(int(v) for v in arr)
    return misclassified_mass(C, sigma), sigma


def misclassified_mass(C: np.ndarray, sigma) -> float:
    off = np.ones(C.shape, dtype=bool)
    off[np.arange(C.shape[0]), np.asarray(sigma)] = False
    return math.fsum(C[off])


def bigF_squared(P: DiscreteMeasure, cstar, c) -> float:
    """Mean squared distance between the images of a point under the two quantizers."""
    cstar, c = _pair(cstar, c)
    X = P.support
    gap = c.centers[nn_assign_many(X, c)] - cstar.centers[nn_assign_many(X, cstar)]
    return float(P.weights @ (gap * gap).sum(axis=1))


# -- margin functionals -------------------------------------------------------


def p_of_t(P: DiscreteMeasure, optima, t: float) -> float:
    """Worst mass, over the supplied optimal codebooks, of the frontier inflated by ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    books = [as_codebook(c) for c in optima]
    if not books:
        raise ValueError("p(t) needs at least one optimal codebook")
    best = 0.0
    for c in books:
        if c.k < 2:
            continue
        best = max(best, P.mass(frontier_distance_many(P.support, c) <= t))
    return best


def p_star(P: DiscreteMeasure, cstar, t: float) -> float:
    """Mass of the frontier inflated in proportion to the distance to the own center."""
    if t <= 0:
        raise ValueError("p* is defined for t > 0")
    cstar = as_codebook(cstar)
    X = P.support
    fd = frontier_distance_many(X, cstar)
    own = cstar.centers[nn_assign_many(X, cstar)]
    dist = np.sqrt(((X - own) ** 2).sum(axis=1))
    return P.mass(cstar.m * fd <= 2.0 * dist * t + 2.0 * t * t)


def a_mass(P: DiscreteMeasure, cstar, lam: float) -> float:
    """P(A(lam)) for the Voronoi diagram of ``cstar``."""
    return P.mass(in_A_lambda_many(P.support, as_codebook(cstar), lam))


def lambda_n(P: DiscreteMeasure, cstar) -> float:
    """Largest lambda with P(A(lambda)) = 1; ``math.inf`` if no push ever changes a cell."""
    cstar = as_codebook(cstar)
    lam = lambda_max_many(P.support, cstar)
    value = float(lam.min())
    if value == 0.0:
        bad = int(np.argmin(lam))
        warnings.warn(
            f"atom {P.support[bad].tolist()} lies on the Voronoi frontier; margin condition fails",
            MarginWarning,
            stacklevel=2,
        )
    return value


def c_q_lambda(P: DiscreteMeasure, cstar, q, lam: float) -> float:
    """Risk gap between q* cells and q on the measure pushed away from q* by ``lam``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    cstar, q = _pair(cstar, q)
    X = P.support
    own = cstar.centers[nn_assign_many(X, cstar)]
    pushed = inflate(X, cstar, lam)
    d_own = ((pushed - own) ** 2).sum(axis=1)
    d_q = ((pushed[:, None, :] - q.centers[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    return float(P.weights @ (d_own - d_q))


def c_infinity(P: DiscreteMeasure, cstar, lam: float, n_max: int = N_MAX_ENUM) -> float:
    """Exact sup over k-point quantizers of ``c_q_lambda`` (enumerable measures only).

    Equals the risk of the pushed atoms under the q* cells minus the optimal
    k-means risk of the pushed measure; zero iff q* stays optimal after the push.
    """
    cstar = as_codebook(cstar)
    a, b, c, _ = _partition_quadratics(P, cstar, n_max)
    s = 1.0 + lam
    own = s * s * risk(P, cstar)
    return max(0.0, own - float(np.min(a * s * s + b * s + c)))


def certified_margin(P: DiscreteMeasure, cstar, n_max: int = N_MAX_ENUM, tol: float = TOL_GEO) -> float:
    """Largest lambda with c_infinity(lambda') <= 0 on [0, lambda], capped at ``lambda_n``.

    Pushing by lambda scales every atom's offset from its center by s = 1 + lambda,
    so each partition's k-means cost is a quadratic in s. The margin ends at the
    first s > 1 where some partition undercuts the q* cells.
    """
    cstar = as_codebook(cstar)
    a, b, c, own_row = _partition_quadratics(P, cstar, n_max)
    r_star = risk(P, cstar)
    alpha = np.delete(a - r_star, own_row)
    beta = np.delete(b, own_row)
    gamma = np.delete(c, own_row)
    if np.any(alpha + beta + gamma <= tol):
        return 0.0  # another partition already ties q*: no positive margin
    first = _first_root_above_one(alpha, beta, gamma)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MarginWarning)
        cap = lambda_n(P, cstar)
    return float(min(cap, first - 1.0))


def _first_root_above_one(alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> float:
    """Smallest s > 1 where some alpha s^2 + beta s + gamma (positive at s = 1) reaches 0."""
    roots = np.full(alpha.shape, np.inf)
    lin = np.abs(alpha) <= 1e-15 * (np.abs(beta) + np.abs(gamma) + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_lin = -gamma / beta
    ok = lin & (beta < 0)
    roots[ok] = r_lin[ok]
    quad = ~lin
    disc = beta * beta - 4.0 * alpha * gamma
    real = quad & (disc >= 0)
    sq = np.sqrt(np.where(real, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = (-beta - sq) / (2.0 * alpha)
        r2 = (-beta + sq) / (2.0 * alpha)
    for r in (r1, r2):
        good = real & (r > 1.0)
        roots[good] = np.minimum(roots[good], r[good])
    return float(roots.min()) if roots.size else math.inf


def _partition_quadratics(P: DiscreteMeasure, cstar: Codebook, n_max: int):
    """Coefficients of cost_pi(s) = a s^2 + b s + c for every k-partition pi of the atoms."""
    if P.n > n_max:
        raise ValueError(f"support size {P.n} exceeds the enumeration limit n_max={n_max}")
    k = cstar.k
    labels = set_partitions(P.n, k)
    X, w = P.support, P.weights
    own_idx = nn_assign_many(X, cstar)
    C = cstar.centers[own_idx]
    D = X - C
    wC, wD = w[:, None] * C, w[:, None] * D
    cc, cd, dd = w * (C * C).sum(1), w * (C * D).sum(1), w * (D * D).sum(1)
    a = np.zeros(labels.shape[0])
    b = np.zeros_like(a)
    c = np.zeros_like(a)
    for j in range(k):
        member = (labels == j).astype(float)
        mass = member @ w
        A, B = member @ wC, member @ wD
        a += member @ dd - (B * B).sum(1) / mass
        b += 2.0 * (member @ cd - (A * B).sum(1) / mass)
        c += member @ cc - (A * A).sum(1) / mass
    # the q* partition, relabelled into restricted-growth form
    _, canon = np.unique(own_idx, return_index=True)
    remap = {int(own_idx[i]): r for r, i in enumerate(sorted(canon))}
    own_rgs = np.array([remap[int(v)] for v in own_idx], dtype=labels.dtype)
    own_row = int(np.flatnonzero((labels == own_rgs).all(axis=1))[0])
    return a, b, c, own_row


def theorem_constant(lam: float) -> float:
    """(1 + lam) / lam, with the limit 1 at lam = inf."""
    if lam <= 0:
        return math.inf
    if math.isinf(lam):
        return 1.0
    return (1.0 + lam) / lam


# -- bundles ------------------------------------------------------------------


@dataclass
class StabilityReport:
    f1: float
    f2: float
    bigF2: float
    hausdorff: float
    excess_risk: float
    matching: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "f1": self.f1,
            "f2": self.f2,
            "bigF2": self.bigF2,
            "hausdorff": self.hausdorff,
            "excess_risk": self.excess_risk,
            "matching": list(self.matching),
        }


def stability_report(P: DiscreteMeasure, cstar, c) -> StabilityReport:
    cstar, c = _pair(cstar, c)
    d1, sigma = f1(cstar, c)
    d2, _ = f2(P, cstar, c)
    return StabilityReport(
        f1=d1,
        f2=d2,
        bigF2=bigF_squared(P, cstar, c),
        hausdorff=hausdorff(cstar, c),
        excess_risk=risk(P, c) - risk(P, cstar),
        matching=sigma,
    )


@dataclass
class MarginProfile:
    lambda_n: float
    p_curve: list[tuple[float, float]] = field(default_factory=list)
    p_star_curve: list[tuple[float, float]] = field(default_factory=list)
    a_mass_curve: list[tuple[float, float]] = field(default_factory=list)
    p_is_lower_bound: bool = False


def margin_profile(P: DiscreteMeasure, cstar, t_grid, lam_grid, optima=None, certified: bool = True) -> MarginProfile:
    """Sample p, p* and lambda -> P(A(lambda)) on the given grids.

    When ``certified`` is false the optimum set may be incomplete and the
    p-curve is flagged as a lower bound.
    """
    cstar = as_codebook(cstar)
    optima = list(optima) if optima else [cstar]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MarginWarning)
        lam_n = lambda_n(P, cstar)
    return MarginProfile(
        lambda_n=lam_n,
        p_curve=[(float(t), p_of_t(P, optima, t)) for t in t_grid],
        p_star_curve=[(float(t), p_star(P, cstar, t)) for t in t_grid if t > 0],
        a_mass_curve=[(float(lam), a_mass(P, cstar, lam)) for lam in lam_grid],
        p_is_lower_bound=not certified,
    )
