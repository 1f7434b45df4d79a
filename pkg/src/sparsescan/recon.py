"""Inverse-distance-weighted reconstruction from sparse measurements.

Each unmeasured pixel is estimated as the 1/d^p weighted average of its
nearest measured neighbors; measured pixels are copied exactly.  A windowed
incremental update recomputes only pixels near a new measurement, which is
what the greedy engine uses between steps.
"""

from dataclasses import dataclass

import numpy as np

from . import neighbors
from .core import (
    MeasurementSet,
    PixelLocation,
    Reconstruction,
    linear_index,
    location_of,
)
from .numerics import quantize_u8
from . import pgm


@dataclass(frozen=True)
class IdwParams:
    """Reconstruction controls: neighbor count, distance power, window halfwidth."""

    neighbors: int = 10
    power: float = 2.0
    window: int = 15

    def __post_init__(self):
        if self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")
        if not self.power > 0:
            raise ValueError("power must be positive")
        if self.window < 1:
            raise ValueError("window halfwidth must be >= 1")


def idw_from_neighbors(
    comp: np.ndarray, n: int, value_flat: np.ndarray, power: float
) -> np.ndarray:
    """IDW estimates for rows of canonical neighbor composites.

    The weighted sums run in canonical neighbor order with a fixed reduction,
    so results are bitwise independent of how the rows were batched.
    """
    d2, idx, valid = neighbors.decode(comp, n)
    weights = np.where(valid, d2.astype(np.float64) ** (-0.5 * power), 0.0)
    vals = np.where(valid, value_flat[idx], 0.0)
    return np.sum(weights * vals, axis=1) / np.sum(weights, axis=1)


def nearest_measured(mset: MeasurementSet, loc, count: int):
    """The `count` nearest measured pixels to loc as (location, value, distance).

    Ordered by distance, ties broken by lower linear index; a measured query
    pixel returns itself first at distance zero.  Fewer than `count` entries
    come back when the set is smaller than that.
    """
    if mset.k == 0:
        raise ValueError("measurement set is empty")
    if not (0 <= loc[0] < mset.height and 0 <= loc[1] < mset.width):
        raise ValueError(f"{tuple(loc)} outside {mset.width}x{mset.height} grid")
    n = mset.width * mset.height
    q = np.array([linear_index(PixelLocation(*loc), mset.width)], dtype=np.int64)
    comp = neighbors.knn_measured(q, mset.measured_indices(), mset.width, mset.height, count)
    d2, idx, valid = neighbors.decode(comp, n)
    grid = mset.value_grid()
    out = []
    for j in range(comp.shape[1]):
        if not valid[0, j]:
            break
        pix = location_of(int(idx[0, j]), mset.width)
        out.append((pix, float(grid[pix.row, pix.col]), float(np.sqrt(float(d2[0, j])))))
    return out


def reconstruct(mset: MeasurementSet, params: IdwParams) -> Reconstruction:
    """Full IDW reconstruction: measured pixels exact, the rest estimated."""
    if mset.k == 0:
        raise ValueError("cannot reconstruct from an empty measurement set")
    neighbors.check_grid_capacity(mset.width, mset.height)
    out = mset.value_grid().copy()
    unmeas = mset.unmeasured_indices()
    if unmeas.size:
        comp = neighbors.knn_measured(
            unmeas, mset.measured_indices(), mset.width, mset.height, params.neighbors
        )
        est = idw_from_neighbors(comp, mset.width * mset.height, out.ravel(), params.power)
        out.ravel()[unmeas] = est
    return Reconstruction(width=mset.width, height=mset.height, values=out)


def window_bounds(loc, width: int, height: int, halfwidth: int):
    """Clipped (r0, r1, c0, c1) bounds of the square window centered at loc."""
    r0 = max(loc[0] - halfwidth, 0)
    r1 = min(loc[0] + halfwidth, height - 1)
    c0 = max(loc[1] - halfwidth, 0)
    c1 = min(loc[1] + halfwidth, width - 1)
    return r0, r1, c0, c1


def reconstruct_incremental(
    prev: Reconstruction, mset: MeasurementSet, s_new, params: IdwParams
) -> Reconstruction:
    """Update prev after measuring s_new, recomputing only the window around it.

    Pixels outside the (2w+1)^2 window keep their previous estimates even if
    their neighbor sets changed; inside the window unmeasured pixels are
    re-estimated against the full measured set.
    """
    if mset.k == 0:
        raise ValueError("measurement set is empty")
    if (prev.width, prev.height) != (mset.width, mset.height):
        raise ValueError("reconstruction and measurement set dimensions differ")
    s_new = PixelLocation(int(s_new[0]), int(s_new[1]))
    last_loc, last_val = mset.entries[-1]
    if last_loc != s_new:
        raise ValueError(f"{s_new} is not the most recent measurement {last_loc}")

    out = prev.values.copy()
    out[s_new.row, s_new.col] = last_val
    r0, r1, c0, c1 = window_bounds(s_new, mset.width, mset.height, params.window)
    sub_mask = mset.mask[r0 : r1 + 1, c0 : c1 + 1]
    rows, cols = np.nonzero(~sub_mask)
    if rows.size:
        lin = (rows + r0).astype(np.int64) * mset.width + (cols + c0)
        comp = neighbors.knn_measured(
            lin, mset.measured_indices(), mset.width, mset.height, params.neighbors
        )
        est = idw_from_neighbors(
            comp, mset.width * mset.height, mset.value_grid().ravel(), params.power
        )
        out.ravel()[lin] = est
    return Reconstruction(width=mset.width, height=mset.height, values=out)


def save_reconstruction(path, recon: Reconstruction) -> None:
    """Export a reconstruction as P5, quantizing half-away-from-zero."""
    pgm.write_pgm(path, quantize_u8(recon.values))


def save_mask(path, mask: np.ndarray) -> None:
    """Export a boolean measurement mask as P5 (measured=255, unmeasured=0)."""
    pgm.write_pgm(path, np.where(mask, 255, 0).astype(np.uint8))
