"""Per-pixel descriptors fed to the ERD regressors.

Six features in fixed order for an unmeasured pixel s:
  f1  horizontal gradient magnitude of the reconstruction at s
  f2  vertical gradient magnitude
  f3  standard deviation of the nearest measured neighbor values
  f4  mean absolute difference between the estimate at s and those values
  f5  Euclidean distance to the nearest measured pixel
  f6  fraction of pixels measured within Chebyshev radius w of s

Gradients are central differences halved, falling back to one-sided at the
borders.  f6 always divides by the full (2w+1)^2 window area, so border
pixels see smaller fractions.  The batch path and the single-pixel path run
the same arithmetic, so they agree bitwise.
"""

from dataclasses import dataclass

import numpy as np

from . import neighbors
from .core import MeasurementSet, PixelLocation, Reconstruction, linear_index
from .recon import IdwParams, window_bounds

FEATURE_COUNT = 6
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class FeatureVector:
    location: PixelLocation
    values: np.ndarray  # (FEATURE_COUNT,)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (FEATURE_COUNT,):
            raise ValueError(f"expected {FEATURE_COUNT} features, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature standardization constants frozen into trained models."""

    means: np.ndarray  # (FEATURE_COUNT,)
    stds: np.ndarray  # (FEATURE_COUNT,), floored at STD_FLOOR

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stds, dtype=np.float64)
        if means.shape != (FEATURE_COUNT,) or stds.shape != (FEATURE_COUNT,):
            raise ValueError("stats must have one entry per feature")
        if np.any(stds < STD_FLOOR):
            raise ValueError(f"stds must be floored at {STD_FLOOR}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)


def fit_stats(feature_rows: np.ndarray) -> FeatureStats:
    """Population mean and std per feature column, std floored at 1e-8."""
    rows = np.asarray(feature_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != FEATURE_COUNT:
        raise ValueError(f"expected (n, {FEATURE_COUNT}) feature rows")
    if rows.shape[0] < 1:
        raise ValueError("at least one row required")
    means = rows.mean(axis=0)
    stds = np.sqrt(np.mean((rows - means) ** 2, axis=0))
    return FeatureStats(means=means, stds=np.maximum(stds, STD_FLOOR))


def standardize(values: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """(v - mean) / std, elementwise over the final axis."""
    return (np.asarray(values, dtype=np.float64) - stats.means) / stats.stds


def measured_counts_grid(mask: np.ndarray, halfwidth: int) -> np.ndarray:
    """Per-pixel count of measured pixels within Chebyshev radius halfwidth.

    Computed with a summed-area table; all integer arithmetic, so it agrees
    exactly with direct counting.
    """
    h, w = mask.shape
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask.astype(np.int64), axis=0), axis=1, out=sat[1:, 1:])
    r = np.arange(h)
    c = np.arange(w)
    r0 = np.maximum(r - halfwidth, 0)
    r1 = np.minimum(r + halfwidth, h - 1) + 1
    c0 = np.maximum(c - halfwidth, 0)
    c1 = np.minimum(c + halfwidth, w - 1) + 1
    return (
        sat[r1[:, None], c1[None, :]]
        - sat[r0[:, None], c1[None, :]]
        - sat[r1[:, None], c0[None, :]]
        + sat[r0[:, None], c0[None, :]]
    )


def compute_feature_matrix(
    recon_grid: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    comp: np.ndarray,
    value_flat: np.ndarray,
    window_counts: np.ndarray,
    params: IdwParams,
) -> np.ndarray:
    """Shared feature arithmetic over prepared neighbor state.

    recon_grid is the current (h, w) reconstruction, comp holds canonical
    neighbor composites for each target row, window_counts the number of
    measured pixels within Chebyshev radius params.window of each target.
    """
    h, w = recon_grid.shape
    n = h * w
    d2, idx, valid = neighbors.decode(comp, n)
    dist = np.sqrt(d2.astype(np.float64))
    vals = np.where(valid, value_flat[idx], 0.0)
    counts = valid.sum(axis=1).astype(np.float64)

    center = recon_grid[rows, cols]
    left = recon_grid[rows, np.maximum(cols - 1, 0)]
    right = recon_grid[rows, np.minimum(cols + 1, w - 1)]
    up = recon_grid[np.maximum(rows - 1, 0), cols]
    down = recon_grid[np.minimum(rows + 1, h - 1), cols]
    denom_h = (cols > 0).astype(np.float64) + (cols < w - 1).astype(np.float64)
    denom_v = (rows > 0).astype(np.float64) + (rows < h - 1).astype(np.float64)
    f1 = np.where(denom_h > 0, np.abs(right - left) / np.maximum(denom_h, 1.0), 0.0)
    f2 = np.where(denom_v > 0, np.abs(down - up) / np.maximum(denom_v, 1.0), 0.0)

    nb_mean = np.sum(vals, axis=1) / counts
    f3 = np.sqrt(np.sum(np.where(valid, (vals - nb_mean[:, None]) ** 2, 0.0), axis=1) / counts)
    f4 = np.sum(np.where(valid, np.abs(center[:, None] - vals), 0.0), axis=1) / counts
    f5 = dist[:, 0]
    area = float((2 * params.window + 1) ** 2)
    f6 = window_counts.astype(np.float64) / area
    return np.stack([f1, f2, f3, f4, f5, f6], axis=1)


def extract_features(
    recon: Reconstruction, mset: MeasurementSet, s, params: IdwParams
) -> FeatureVector:
    """Descriptor for one unmeasured pixel against the current reconstruction."""
    if (recon.width, recon.height) != (mset.width, mset.height):
        raise ValueError("reconstruction and measurement set dimensions differ")
    s = PixelLocation(int(s[0]), int(s[1]))
    if not (0 <= s.row < mset.height and 0 <= s.col < mset.width):
        raise ValueError(f"{s} outside {mset.width}x{mset.height} grid")
    if mset.mask[s.row, s.col]:
        raise ValueError(f"{s} is already measured")
    if mset.k == 0:
        raise ValueError("measurement set is empty")

    lin = np.array([linear_index(s, mset.width)], dtype=np.int64)
    comp = neighbors.knn_measured(
        lin, mset.measured_indices(), mset.width, mset.height, params.neighbors
    )
    r0, r1, c0, c1 = window_bounds(s, mset.width, mset.height, params.window)
    count = np.array([np.count_nonzero(mset.mask[r0 : r1 + 1, c0 : c1 + 1])], dtype=np.int64)
    matrix = compute_feature_matrix(
        recon.values,
        np.array([s.row]),
        np.array([s.col]),
        comp,
        mset.value_grid().ravel(),
        count,
        params,
    )
    return FeatureVector(location=s, values=matrix[0])
