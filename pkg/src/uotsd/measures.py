"""Discrete measures, cost matrices and seeded sample sources."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

SQUARED_EUCLIDEAN = "squared_euclidean"
EUCLIDEAN = "euclidean"

# Heavily skewed target weights wreck the conditioning guarantee, which
# scales with beta_max / beta_min; warn past this ratio.
WEIGHT_RATIO_WARN = 10.0


@dataclass(frozen=True)
class DiscreteMeasure:
    """A nonnegative measure supported on finitely many points.

    ``points`` has shape (n, d), ``weights`` shape (n,) with strictly
    positive entries.  Arrays are frozen (non-writeable) on construction.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pts.ndim != 2:
            raise InvalidInputError(f"points must be (n, d), got shape {pts.shape}")
        if wts.ndim != 1 or wts.shape[0] != pts.shape[0]:
            raise InvalidInputError("weights must be (n,) aligned with points")
        if pts.shape[0] == 0:
            raise InvalidInputError("a measure needs at least one support point")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points must be finite")
        if not np.all(np.isfinite(wts)) or np.any(wts <= 0.0):
            raise InvalidInputError("weights must be finite and strictly positive")
        ratio = float(wts.max() / wts.min())
        if ratio > WEIGHT_RATIO_WARN:
            warnings.warn(
                f"weight ratio max/min = {ratio:.3g} exceeds {WEIGHT_RATIO_WARN}; "
                "conditioning degrades linearly in this ratio",
                stacklevel=2,
            )
        pts = pts.copy()
        wts = wts.copy()
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


def build_cost_matrix(source_points, target_points, metric: str = SQUARED_EUCLIDEAN) -> np.ndarray:
    """Pairwise cost matrix between two point clouds.

    Parameters
    ----------
    source_points : (n1, d) array_like
    target_points : (n2, d) array_like
    metric : str
        ``"squared_euclidean"`` (default) or ``"euclidean"``.

    Returns
    -------
    (n1, n2) ndarray of nonnegative costs.
    """
    xs = np.asarray(source_points, dtype=float)
    ys = np.asarray(target_points, dtype=float)
    if xs.ndim != 2 or ys.ndim != 2 or xs.shape[1] != ys.shape[1]:
        raise InvalidInputError("point arrays must be 2-d with a common dimension")
    if metric not in (SQUARED_EUCLIDEAN, EUCLIDEAN):
        raise InvalidInputError(f"unknown metric {metric!r}")
    sq = (
        (xs * xs).sum(axis=1)[:, None]
        + (ys * ys).sum(axis=1)[None, :]
        - 2.0 * xs @ ys.T
    )
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq) if metric == EUCLIDEAN else sq


def cost_rows_fn(target_points, metric: str = SQUARED_EUCLIDEAN):
    """Closure mapping a batch of source points to its cost rows."""
    ys = np.asarray(target_points, dtype=float)

    def rows(batch_points):
        return build_cost_matrix(batch_points, ys, metric)

    return rows


@dataclass
class SampleSource:
    """Seeded stream of source samples for the online solver.

    Two modes:

    * finite: draws points (with replacement) from a fixed dataset, index i
      with probability weights_i / total; exposes the dataset so callers can
      precompute cost rows.
    * stream: defers to a generator callable ``gen(rng, m) -> (m, d) array``.

    A source owns one RNG; with a fixed seed and a fixed call pattern the
    sequence of draws is reproducible bit for bit.
    """

    total_mass: float
    seed: int
    points: np.ndarray | None = None
    weights: np.ndarray | None = None
    generator_fn: object = None
    dim: int | None = None
    _rng: np.random.Generator = field(init=False, repr=False)
    _cum: np.ndarray | None = field(init=False, repr=False, default=None)
    _uniform: bool = field(init=False, repr=False, default=False)

    def __post_init__(self):
        if not (np.isfinite(self.total_mass) and self.total_mass > 0):
            raise InvalidInputError("total_mass must be positive")
        finite = self.points is not None
        if finite == (self.generator_fn is not None):
            raise InvalidInputError("provide exactly one of points or generator_fn")
        if finite:
            pts = np.asarray(self.points, dtype=float)
            wts = np.asarray(self.weights, dtype=float)
            if pts.ndim != 2 or wts.ndim != 1 or len(wts) != len(pts):
                raise InvalidInputError("finite source needs (n, d) points and (n,) weights")
            if np.any(wts <= 0) or not np.all(np.isfinite(wts)):
                raise InvalidInputError("finite source weights must be positive and finite")
            self.points = pts
            self.weights = wts
            self.dim = pts.shape[1]
            p = wts / wts.sum()
            self._uniform = bool(np.allclose(p, p[0], rtol=0.0, atol=1e-15))
            self._cum = np.cumsum(p)
            self._cum[-1] = 1.0
        elif self.dim is None:
            raise InvalidInputError("stream source needs dim")
        self._rng = np.random.default_rng(self.seed)

    @property
    def is_finite(self) -> bool:
        return self.points is not None

    def draw_indices(self, m: int) -> np.ndarray:
        """Dataset indices for a batch (finite mode only)."""
        if not self.is_finite:
            raise InvalidInputError("draw_indices is only available for finite sources")
        if self._uniform:
            return self._rng.integers(0, len(self.points), size=m)
        return np.searchsorted(self._cum, self._rng.random(m), side="right")

    def draw(self, m: int) -> np.ndarray:
        """A batch of m sample points, shape (m, d)."""
        if m <= 0:
            raise InvalidInputError("batch size must be positive")
        if self.is_finite:
            return self.points[self.draw_indices(m)]
        out = np.asarray(self.generator_fn(self._rng, m), dtype=float)
        if out.shape != (m, self.dim):
            raise InvalidInputError(
                f"generator returned shape {out.shape}, expected {(m, self.dim)}"
            )
        return out


def empirical_source(mu: DiscreteMeasure, seed: int) -> SampleSource:
    """Sample source drawing from mu / mu(X), carrying total mass mu(X)."""
    return SampleSource(
        total_mass=mu.total_mass, seed=seed, points=mu.points, weights=mu.weights
    )


def gaussian_mixture_sampler(means, scale: float, seed: int,
                             total_mass: float = 1.0) -> SampleSource:
    """Stream source for an equal-proportion isotropic Gaussian mixture.

    ``means`` is (k, d); each draw picks a mode uniformly and adds
    scale * N(0, I_d) noise.
    """
    mu = np.asarray(means, dtype=float)
    if mu.ndim != 2 or mu.shape[0] == 0:
        raise InvalidInputError("means must be (k, d) with k >= 1")
    if not (np.isfinite(scale) and scale >= 0):
        raise InvalidInputError("scale must be a nonnegative finite number")
    k, d = mu.shape

    def gen(rng, m):
        modes = rng.integers(0, k, size=m)
        return mu[modes] + scale * rng.standard_normal((m, d))

    return SampleSource(total_mass=total_mass, seed=seed, generator_fn=gen, dim=d)


def load_measure_csv(path, total_mass: float | None = None) -> DiscreteMeasure:
    """Read a discrete measure from CSV.

    Each row is one point.  A header naming a ``weight`` column marks that
    column as the weights; all other columns are coordinates.  Without a
    header (first row fully numeric) every column is a coordinate.  Missing
    weights default to uniform mass summing to 1, rescaled to ``total_mass``
    when given.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InvalidInputError(f"{path}: empty CSV")

    def _numeric(row):
        try:
            [float(c) for c in row]
            return True
        except ValueError:
            return False

    weight_col = None
    if not _numeric(rows[0]):
        header = [c.strip().lower() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise InvalidInputError(f"{path}: header but no data rows")
        if "weight" in header:
            weight_col = header.index("weight")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric data row ({exc})") from exc

    if weight_col is not None:
        weights = data[:, weight_col]
        points = np.delete(data, weight_col, axis=1)
    else:
        points = data
        weights = np.full(len(data), 1.0 / len(data))
    if points.shape[1] == 0:
        raise InvalidInputError(f"{path}: no coordinate columns")
    if total_mass is not None:
        weights = weights * (total_mass / weights.sum())
    return DiscreteMeasure(points=points, weights=weights)


def load_image_measure(path, total_mass: float = 1.0) -> DiscreteMeasure:
    """Pixels of an RGB image as a measure on the unit color cube.

    Every pixel becomes one support point in [0, 1]^3 with uniform weight.
    Non-RGB images are rejected rather than converted.
    """
    from PIL import Image

    with Image.open(path) as img:
        if img.mode != "RGB":
            raise InvalidInputError(f"{path}: expected an RGB image, got mode {img.mode!r}")
        arr = np.asarray(img, dtype=float) / 255.0
    pts = arr.reshape(-1, 3)
    weights = np.full(len(pts), total_mass / len(pts))
    return DiscreteMeasure(points=pts, weights=weights)


def image_shape(path):
    """(height, width) of an image file, for reshaping recolored output."""
    from PIL import Image

    with Image.open(path) as img:
        return img.height, img.width
