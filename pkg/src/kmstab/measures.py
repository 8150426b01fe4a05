"""Finitely supported probability measures, the named example distributions, and file I/O.

File formats (UTF-8, plain decimal reals):

* CSV: a header row ``x_1,...,x_d`` optionally followed by ``w``; one atom per
  row. Without a ``w`` column every row gets weight 1/n and repeated rows merge.
* JSON: ``{"dim": d, "atoms": [{"x": [...], "w": ...}, ...]}``.

Weights must sum to one within ``WEIGHT_TOL``; files are never renormalized.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WEIGHT_TOL = 1e-12


class MeasureFormatError(ValueError):
    """A measure file could not be parsed or fails validation."""


class DiscreteMeasure:
    """Probability measure with finitely many atoms.

    Atoms are stored merged (exact coordinate equality) and sorted
    lexicographically, so two measures built from the same multiset of points
    compare equal regardless of input order.
    """

    __slots__ = ("support", "weights")

    def __init__(self, support, weights=None):
        pts = np.array(support, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError(f"support must be a non-empty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("support coordinates must be finite")
        n = pts.shape[0]
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.array(weights, dtype=float).reshape(-1)
            if w.shape[0] != n:
                raise ValueError(f"{n} atoms but {w.shape[0]} weights")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("weights must be finite and strictly positive")
        pts = pts + 0.0  # folds -0.0 into 0.0 so merging is sign-blind
        uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        if uniq.shape[0] != n:
            if weights is None:
                w = np.bincount(inverse, minlength=uniq.shape[0]) / n
            else:
                w = np.bincount(inverse, weights=w, minlength=uniq.shape[0])
        else:
            w = w[np.argsort(inverse)]
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1 within {WEIGHT_TOL}")
        uniq.setflags(write=False)
        w.setflags(write=False)
        self.support = uniq
        self.weights = w

    @property
    def n(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.support.shape == other.support.shape
            and bool(np.all(self.support == other.support))
            and bool(np.all(self.weights == other.weights))
        )

    def __repr__(self) -> str:
        return f"DiscreteMeasure(n={self.n}, dim={self.dim})"

    def mass(self, mask) -> float:
        return float(self.weights[np.asarray(mask, dtype=bool)].sum())

    def pushforward(self, points) -> "DiscreteMeasure":
        """Image measure: atom i moved to ``points[i]`` with its weight kept."""
        return DiscreteMeasure(points, self.weights)


def from_samples(points) -> DiscreteMeasure:
    """Empirical measure of a sample (weight 1/n per point, repeats merged)."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ValueError("cannot build an empirical measure from zero samples")
    return DiscreteMeasure(pts)


# -- named distributions ------------------------------------------------------


@dataclass(frozen=True)
class NamedDistribution:
    tag: str
    params: tuple = ()
    components: tuple = field(default=())

    def __post_init__(self):
        if self.tag == "uniform_rectangle":
            if len(self.params) != 4:
                raise ValueError("uniform_rectangle takes (a, b, c, d)")
            a, b, c, d = self.params
            if not (a < b and c < d):
                raise ValueError(f"degenerate rectangle [{a},{b}]x[{c},{d}]")
        elif self.tag == "two_segments":
            if len(self.params) != 0:
                raise ValueError("two_segments takes no parameters")
        elif self.tag == "custom_mixture":
            if not self.components:
                raise ValueError("custom_mixture needs at least one component")
            ws = [w for w, _ in self.components]
            if any(w <= 0 for w in ws) or abs(math.fsum(ws) - 1.0) > WEIGHT_TOL:
                raise ValueError("mixture weights must be positive and sum to 1")
            dims = {comp.dim for _, comp in self.components}
            if len(dims) != 1:
                raise ValueError("mixture components differ in dimension")
        else:
            raise ValueError(f"unknown distribution tag {self.tag!r}")

    @property
    def dim(self) -> int:
        if self.tag == "custom_mixture":
            return self.components[0][1].dim
        return 2


def uniform_rectangle(a: float = -1.0, b: float = 1.0, c: float = -0.5, d: float = 0.5) -> NamedDistribution:
    """Uniform law on [a, b] x [c, d]; defaults to the first counterexample's box."""
    return NamedDistribution("uniform_rectangle", (float(a), float(b), float(c), float(d)))


def two_segments() -> NamedDistribution:
    """Equal mixture of the uniform laws on [-1, 1] x {1} and [-1, 1] x {-1}."""
    return NamedDistribution("two_segments")


def custom_mixture(components) -> NamedDistribution:
    comps = tuple((float(w), dist) for w, dist in components)
    return NamedDistribution("custom_mixture", (), comps)


def sample(dist: NamedDistribution, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points from ``dist``; identical output for identical seeds."""
    if n < 1:
        raise ValueError("need n >= 1 samples")
    return _sample(dist, n, np.random.default_rng(seed))


def _sample(dist: NamedDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    if dist.tag == "uniform_rectangle":
        a, b, c, d = dist.params
        return np.column_stack([rng.uniform(a, b, n), rng.uniform(c, d, n)])
    if dist.tag == "two_segments":
        x1 = rng.uniform(-1.0, 1.0, n)
        x2 = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        return np.column_stack([x1, x2])
    weights = np.array([w for w, _ in dist.components])
    which = rng.choice(len(weights), size=n, p=weights / weights.sum())
    out = np.empty((n, dist.dim))
    for idx, (_, comp) in enumerate(dist.components):
        sel = which == idx
        if sel.any():
            out[sel] = _sample(comp, int(sel.sum()), rng)
    return out


def _cell_centres(lo: float, hi: float, cells: int) -> np.ndarray:
    h = (hi - lo) / cells
    return lo + h * (np.arange(cells) + 0.5)


def grid_discretize(dist: NamedDistribution, resolution) -> DiscreteMeasure:
    """Midpoint-rule quadrature measure for a continuous named law.

    ``resolution`` is the number of cells along the first axis; for a
    rectangle the second axis gets a proportional count (so 400 on the
    2 x 1 box gives 400 x 200 cells). A pair ``(nx, ny)`` fixes both.
    """
    support, weights = _grid(dist, resolution)
    total = math.fsum(weights)
    return DiscreteMeasure(support, np.asarray(weights) / total)


def _grid(dist: NamedDistribution, resolution):
    if dist.tag == "uniform_rectangle":
        a, b, c, d = dist.params
        if isinstance(resolution, (tuple, list)):
            nx, ny = (int(r) for r in resolution)
        else:
            nx = int(resolution)
            ny = max(1, int(round(nx * (d - c) / (b - a))))
        if nx < 1 or ny < 1 or nx * ny < 2:
            raise ValueError(f"resolution {resolution!r} too coarse")
        xs, ys = np.meshgrid(_cell_centres(a, b, nx), _cell_centres(c, d, ny), indexing="ij")
        pts = np.column_stack([xs.ravel(), ys.ravel()])
        return pts, np.full(pts.shape[0], 1.0 / pts.shape[0])
    if dist.tag == "two_segments":
        r = int(resolution[0] if isinstance(resolution, (tuple, list)) else resolution)
        if r < 2:
            raise ValueError("two_segments needs resolution >= 2")
        xs = _cell_centres(-1.0, 1.0, r)
        pts = np.vstack([np.column_stack([xs, np.ones(r)]), np.column_stack([xs, -np.ones(r)])])
        return pts, np.full(2 * r, 1.0 / (2 * r))
    if dist.tag == "custom_mixture":
        pts, ws = [], []
        for w, comp in dist.components:
            p, cw = _grid(comp, resolution)
            pts.append(p)
            ws.append(w * np.asarray(cw))
        return np.vstack(pts), np.concatenate(ws)
    raise ValueError(f"cannot discretize distribution {dist.tag!r}")


# -- I/O ----------------------------------------------------------------------


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt not in ("csv", "json"):
        raise ValueError(f"unsupported measure format {fmt!r} (use csv or json)")
    return fmt


def store(measure: DiscreteMeasure, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "json":
        doc = {
            "dim": measure.dim,
            "atoms": [{"x": x.tolist(), "w": float(w)} for x, w in zip(measure.support, measure.weights)],
        }
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{i + 1}" for i in range(measure.dim)] + ["w"])
        for x, w in zip(measure.support, measure.weights):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])


def load(path, fmt: str | None = None) -> DiscreteMeasure:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MeasureFormatError(f"{path}: {exc}") from exc
    try:
        if fmt == "json":
            return _load_json(text)
        return _load_csv(text)
    except MeasureFormatError as exc:
        raise MeasureFormatError(f"{path}: {exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise MeasureFormatError(f"{path}: {exc}") from exc


def _load_json(text: str) -> DiscreteMeasure:
    doc = json.loads(text)
    dim = int(doc["dim"])
    atoms = doc["atoms"]
    if not atoms:
        raise MeasureFormatError("no atoms")
    xs = [[float(v) for v in a["x"]] for a in atoms]
    if any(len(x) != dim for x in xs):
        raise MeasureFormatError(f"atom dimension differs from dim={dim}")
    ws = [float(a["w"]) for a in atoms]
    _check_total(ws)
    return DiscreteMeasure(xs, ws)


def _load_csv(text: str) -> DiscreteMeasure:
    rows = [r for r in csv.reader(text.splitlines()) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise MeasureFormatError("empty file")
    header = [h.strip() for h in rows[0]]
    if _is_numeric_row(header):
        names = [f"x_{i + 1}" for i in range(len(header))]
    else:
        names, rows = header, rows[1:]
    if not rows:
        raise MeasureFormatError("no atoms")
    has_w = names[-1] == "w"
    dim = len(names) - int(has_w)
    expected = [f"x_{i + 1}" for i in range(dim)]
    if names[:dim] != expected:
        raise MeasureFormatError(f"bad header {names!r}, expected {expected + ['w']!r}")
    data = []
    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(names):
            raise MeasureFormatError(f"row {lineno} has {len(r)} fields, expected {len(names)}")
        data.append([float(v) for v in r])
    arr = np.array(data, dtype=float)
    if not has_w:
        return from_samples(arr)
    _check_total(arr[:, -1])
    return DiscreteMeasure(arr[:, :-1], arr[:, -1])


def _is_numeric_row(row) -> bool:
    try:
        [float(v) for v in row]
    except ValueError:
        return False
    return True


def _check_total(ws) -> None:
    total = math.fsum(ws)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise MeasureFormatError(f"weights sum to {total!r}; a probability measure needs 1")
