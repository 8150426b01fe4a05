"""Seeded random measures and probe codebooks for the verification suites."""

from __future__ import annotations

import numpy as np

from ..geometry import Codebook
from ..measures import DiscreteMeasure, from_samples

NOISE_SCALES = (0.01, 0.1, 0.5)


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for instance ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def random_measure(rng: np.random.Generator, n_max: int = 12, d_max: int = 3, ks=(2, 3)):
    """Small random discrete measure and a cluster count, as ``(P, k)``.

    Half the draws are uniform in a cube, half are noisy blobs around k means;
    one in three gets non-uniform weights.
    """
    k = int(rng.choice(ks))
    d = int(rng.integers(1, d_max + 1))
    n = int(rng.integers(k + 2, n_max + 1))
    if rng.random() < 0.5:
        X = rng.uniform(-1.0, 1.0, (n, d))
    else:
        means = rng.uniform(-2.0, 2.0, (k, d))
        X = means[rng.integers(0, k, n)] + 0.4 * rng.normal(size=(n, d))
    if rng.random() < 1 / 3:
        w = rng.uniform(0.2, 1.0, n)
        return DiscreteMeasure(X, w / w.sum()), k
    return from_samples(X), k


def _distinct(centers: np.ndarray) -> bool:
    return np.unique(centers, axis=0).shape[0] == centers.shape[0]


def probe_codebooks(cstar: Codebook, support: np.ndarray, count: int, rng: np.random.Generator) -> list[Codebook]:
    """Mix of near, far and relabelled probes around ``cstar``.

    Cycles through Gaussian perturbations of ``cstar`` at 0.01 m, 0.1 m and
    0.5 m, uniform codebooks in the support's bounding box, and a swap probe
    where one center is dragged next to another optimal center.
    """
    k, d = cstar.k, cstar.dim
    m = cstar.m if k > 1 else 1.0
    lo, hi = support.min(axis=0), support.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    out = []
    i = 0
    while len(out) < count:
        kind = i % 5
        i += 1
        if kind < 3:
            cand = cstar.centers + rng.normal(size=(k, d)) * NOISE_SCALES[kind] * m
        elif kind == 3:
            cand = rng.uniform(lo, hi, (k, d))
        else:
            cand = cstar.centers + rng.normal(size=(k, d)) * 0.05 * m
            if k > 1:
                a, b = rng.choice(k, size=2, replace=False)
                cand[a] = cstar.centers[b] + rng.normal(size=d) * 0.1 * m
        if _distinct(cand) and np.all(np.isfinite(cand)):
            out.append(Codebook(cand))
    return out
