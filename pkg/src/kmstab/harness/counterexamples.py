"""Desk-scale reproductions of the two distributions showing the margin condition is needed."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..geometry import Codebook
from ..measures import grid_discretize, two_segments, uniform_rectangle
from ..quantize import LloydConfig, exact_optimal_enum, lloyd, risk
from ..stability import MarginWarning, a_mass, bigF_squared, c_q_lambda, certified_margin, f2, lambda_n
from .report import Table
from .suites import FAIL, PASS, Verdict

RECTANGLE_EPS = (0.2, 0.1, 0.05, 0.02, 0.01)
RECTANGLE_OPTIMUM = Codebook([[-0.5, 0.0], [0.5, 0.0]])
SEGMENTS_OPTIMUM = Codebook([[0.0, -1.0], [0.0, 1.0]])
OPTIMUM_ATOL = 1e-6
QUAD_REL = 0.10


@dataclass
class CounterexampleResult:
    verdicts: list[Verdict]
    tables: list[Table]
    info: dict


def _matches(found: Codebook, expected: Codebook, atol: float) -> bool:
    return found.k == expected.k and bool(np.allclose(found.sorted().centers, expected.sorted().centers, atol=atol, rtol=0))


def _verdict(check: str, ok: bool, reason: str = "", **margins) -> Verdict:
    return Verdict(check, PASS if ok else FAIL, "" if ok else reason, {}, margins)


def run_counterexample_rectangle(eps_list=RECTANGLE_EPS, resolution: int = 400, seed: int = 0) -> CounterexampleResult:
    """Uniform law on [-1, 1] x [-1/2, 1/2], k = 2, probes c_eps = {(-1/2, eps), (1/2, -eps)}.

    Tabulates F(q*, q_eps), the excess risk and their ratio F^2 / excess. The
    ratio grows without bound as eps shrinks (about 6/5 + 3/(10 eps) in closed
    form), so no finite margin constant can hold.
    """
    eps_list = [float(e) for e in eps_list]
    if any(not 0 < e < 0.5 for e in eps_list):
        raise ValueError("eps must lie in (0, 1/2)")
    P = grid_discretize(uniform_rectangle(), resolution)
    found = lloyd(P, 2, LloydConfig(restarts=10, seed=seed))
    cstar = found.codebook.sorted()
    r_star = risk(P, cstar)
    cell = 2.0 / resolution
    table = Table("rectangle", ["eps", "F", "excess", "ratio"])
    checks_F, checks_ex = [], []
    for eps in eps_list:
        q = Codebook([[-0.5, eps], [0.5, -eps]])
        F = math.sqrt(bigF_squared(P, cstar, q))
        excess = risk(P, q) - r_star
        ratio = F * F / excess if excess > 0 else math.inf
        table.rows.append([eps, F, excess, ratio])
        checks_F.append(abs(F - eps) / eps)
        checks_ex.append(excess / (eps * eps))
    ratios = [row[3] for row in table.rows]
    order = np.argsort(eps_list)[::-1]
    increasing = all(ratios[b] > ratios[a] for a, b in zip(order[:-1], order[1:]))
    smallest = ratios[int(np.argmin(eps_list))]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MarginWarning)
        lam_n = lambda_n(P, cstar)
    verdicts = [
        _verdict(
            "rectangle_optimum",
            _matches(cstar, RECTANGLE_OPTIMUM, OPTIMUM_ATOL),
            f"recovered {cstar.tolist()}",
            recovered=cstar.tolist(),
            risk=r_star,
        ),
        _verdict(
            "rectangle_F_equals_eps",
            max(checks_F) <= QUAD_REL,
            "F(q*, q_eps) is far from eps: misclassified wedges add about eps/4 to F^2",
            worst_relative_error=max(checks_F),
        ),
        _verdict(
            "rectangle_excess_le_eps2",
            max(checks_ex) <= 1 + QUAD_REL,
            "excess risk above eps^2",
            worst_excess_over_eps2=max(checks_ex),
        ),
        _verdict(
            "rectangle_ratio_unbounded",
            increasing and smallest > 10,
            "ratio F^2/excess not increasing or not above 10",
            ratio_at_smallest_eps=smallest,
        ),
    ]
    info = {
        "resolution": [resolution, resolution // 2],
        "atoms": P.n,
        "cell_diameter": cell * math.sqrt(1.25),
        "lambda_n": lam_n,
        "misclassified_mass": [f2(P, cstar, Codebook([[-0.5, e], [0.5, -e]]))[0] for e in eps_list],
    }
    return CounterexampleResult(verdicts, [table], info)


def run_counterexample_segments(
    resolution: int = 200,
    lam_grid=(0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0),
    probes: int = 200,
    seed: int = 0,
    certify_resolution: int = 6,
) -> CounterexampleResult:
    """Two horizontal segments at heights +-1: the frontier is empty of mass, yet the bound breaks.

    Every atom has an infinite push margin, so P(A(lambda)) = 1 for all
    lambda, but left/right splits beat the q* cells once the push stretches
    the segments enough. The search reports the largest c_q(lambda) it finds
    and, per probe, the lambda above which the stability inequality fails.
    """
    coarse = grid_discretize(two_segments(), certify_resolution)
    exact = exact_optimal_enum(coarse, 2)
    P = grid_discretize(two_segments(), resolution)
    fine = lloyd(P, 2, LloydConfig(restarts=10, seed=seed))
    cstar = SEGMENTS_OPTIMUM
    r_star = risk(P, cstar)

    a_table = Table("segments_a_mass", ["lambda", "a_mass"])
    for lam in lam_grid:
        a_table.rows.append([float(lam), a_mass(P, cstar, lam)])
    all_full = all(abs(row[1] - 1.0) <= 1e-12 for row in a_table.rows)

    rng = np.random.default_rng([int(seed), 11])
    candidates = [Codebook([[-a, 0.0], [a, 0.0]]) for a in (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)]
    while len(candidates) < probes:
        cand = rng.uniform([-2.0, -1.5], [2.0, 1.5], (2, 2))
        if not np.allclose(cand[0], cand[1]):
            candidates.append(Codebook(cand))
    search = Table("segments_search", ["probe", "lambda", "c_q_lambda"])
    best = (-math.inf, None, None)
    lam_probe = [lam for lam in lam_grid if lam > 0]
    for j, q in enumerate(candidates):
        for lam in lam_probe:
            val = c_q_lambda(P, cstar, q, lam)
            if val > best[0]:
                best = (val, j, lam)
    if best[1] is not None:
        for lam in lam_probe:
            search.rows.append([best[1], float(lam), c_q_lambda(P, cstar, candidates[best[1]], lam)])

    # lambda above which F^2 <= (1 + lam)/lam (R(q) - R*) breaks, per probe
    thresholds = Table("segments_thresholds", ["probe", "bigF2", "excess", "lambda_break"])
    lam_break = math.inf
    for j, q in enumerate(candidates):
        F2 = bigF_squared(P, cstar, q)
        ex = risk(P, q) - r_star
        brk = ex / (F2 - ex) if F2 > ex else math.inf
        if j < 6 or brk < math.inf:
            thresholds.rows.append([j, F2, ex, brk])
        lam_break = min(lam_break, brk)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MarginWarning)
        lam_n = lambda_n(P, cstar)
    margin_coarse = certified_margin(coarse, cstar)
    verdicts = [
        _verdict(
            "segments_optimum",
            exact.certified_unique and _matches(exact.codebook, cstar, OPTIMUM_ATOL) and _matches(fine.codebook, cstar, OPTIMUM_ATOL),
            f"enumeration gave {exact.codebook.tolist()} ({exact.unique_flag}), Lloyd gave {fine.codebook.tolist()}",
            enumeration=exact.codebook.sorted().tolist(),
            enumeration_flag=exact.unique_flag,
            lloyd=fine.codebook.sorted().tolist(),
        ),
        _verdict("segments_a_mass_full", all_full, "some P(A(lambda)) below 1", lambda_n=lam_n),
        _verdict(
            "segments_c_q_positive",
            best[0] > 1e-6,
            "no probe with c_q(lambda) > 1e-6 found",
            best_c_q=best[0],
            best_probe=best[1],
            best_lambda=best[2],
            best_q=candidates[best[1]].tolist() if best[1] is not None else None,
        ),
    ]
    info = {
        "resolution": resolution,
        "lambda_n": lam_n,
        "lambda_break": lam_break,
        "certified_margin_coarse": margin_coarse,
        "note": "lower-bound demonstration: the best violating probe found, not a proof",
    }
    return CounterexampleResult(verdicts, [a_table, search, thresholds], info)
