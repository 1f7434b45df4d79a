"""Reduction-in-distortion targets and training database generation.

The RD of a candidate pixel is the drop in total absolute error obtained by
measuring it: D(X, Xhat_before) - D(X, Xhat_after).  The windowed variant
confines both the reconstruction update and the distortion sums to the
(2w+1)^2 window centered on the candidate, which is what training uses; a
window covering the whole image reproduces the exact value bit for bit.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import neighbors
from .core import (
    GroundTruthImage,
    MeasurementSet,
    PixelLocation,
    atomic_write_text,
    linear_index,
)
from .features import FEATURE_COUNT, compute_feature_matrix, fit_stats, measured_counts_grid, standardize
from .numerics import exact_abs_sum
from .recon import IdwParams, idw_from_neighbors, reconstruct, window_bounds
from .regress import ErdModel
from .regress.linear import fit_linear
from .regress.mlp import MlpConfig, fit_mlp
from .regress.svr import fit_svr


@dataclass(frozen=True)
class TrainingSchedule:
    """Sampling densities and candidate counts for database generation."""

    densities: tuple = (0.01, 0.05, 0.10, 0.20, 0.30, 0.40)
    samples_per_level: int = 500
    rd_window: int = 15
    seed: int = 0

    def __post_init__(self):
        d = tuple(float(x) for x in self.densities)
        if len(d) < 1:
            raise ValueError("at least one density required")
        if any(not (0.0 < x < 1.0) for x in d):
            raise ValueError("densities must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("densities must be strictly increasing")
        if self.samples_per_level < 1:
            raise ValueError("samples_per_level must be >= 1")
        if self.rd_window < 1:
            raise ValueError("rd_window must be >= 1")
        object.__setattr__(self, "densities", d)


@dataclass
class TrainingDatabase:
    features: np.ndarray  # (n, FEATURE_COUNT) raw descriptor rows
    rd: np.ndarray  # (n,) windowed RD targets
    image_ids: list  # (n,) str per row
    densities: np.ndarray  # (n,) sampling density per row
    provenance: list  # [(image_id, density, block_seed)] per generation block

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        r = np.asarray(self.rd, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != FEATURE_COUNT or r.shape != (f.shape[0],):
            raise ValueError("features and rd shapes disagree")
        if f.shape[0] < 1:
            raise ValueError("database must contain at least one row")
        if not np.all(np.isfinite(r)):
            raise ValueError("rd targets must be finite")
        self.features = f
        self.rd = r

    @property
    def n(self) -> int:
        return self.features.shape[0]


class RdEvaluator:
    """Scores many candidates against one fixed measurement set.

    Builds the canonical neighbor state and the current reconstruction once,
    then evaluates each candidate by splicing it in incrementally.  Results
    are bit-identical to rebuilding everything per candidate.
    """

    def __init__(self, image: GroundTruthImage, mset: MeasurementSet, params: IdwParams):
        if (image.width, image.height) != (mset.width, mset.height):
            raise ValueError("image and measurement set dimensions differ")
        if mset.k == 0:
            raise ValueError("measurement set is empty")
        neighbors.check_grid_capacity(mset.width, mset.height)
        self.image = image
        self.mset = mset
        self.params = params
        self.width = mset.width
        self.height = mset.height
        self.n = mset.width * mset.height
        self.unmeasured = mset.unmeasured_indices()
        if self.unmeasured.size == 0:
            raise ValueError("no unmeasured pixels to evaluate")
        self._row_of = np.full(self.n, -1, dtype=np.int64)
        self._row_of[self.unmeasured] = np.arange(self.unmeasured.size)
        self.comp = neighbors.knn_measured(
            self.unmeasured, mset.measured_indices(), mset.width, mset.height, params.neighbors
        )
        self._value_flat = mset.value_grid().ravel().copy()
        self.recon_flat = self._value_flat.copy()
        self.recon_flat[self.unmeasured] = idw_from_neighbors(
            self.comp, self.n, self._value_flat, params.power
        )
        self._truth_flat = image.values.ravel()
        self._active = np.ones(self.unmeasured.size, dtype=bool)

    def _candidate_row(self, s) -> int:
        s = PixelLocation(int(s[0]), int(s[1]))
        if not (0 <= s.row < self.height and 0 <= s.col < self.width):
            raise ValueError(f"{s} outside {self.width}x{self.height} grid")
        lin = linear_index(s, self.width)
        row = int(self._row_of[lin])
        if row < 0:
            raise ValueError(f"{s} is already measured")
        return row

    def _rd(self, s, halfwidth) -> float:
        """Shared windowed pipeline; halfwidth None means the whole image."""
        row = self._candidate_row(s)
        s = PixelLocation(int(s[0]), int(s[1]))
        s_lin = linear_index(s, self.width)
        truth_val = float(self.image.values[s.row, s.col])

        if halfwidth is None:
            win = slice(None)
        else:
            r0, r1, c0, c1 = window_bounds(s, self.width, self.height, halfwidth)
            grid_rows = np.arange(r0, r1 + 1)
            win = (grid_rows[:, None] * self.width + np.arange(c0, c1 + 1)[None, :]).ravel()

        # neighbor sets that gain the candidate, restricted to the window
        comp_after = self.comp.copy()
        self._active[row] = False
        affected = neighbors.insert_measurement(
            comp_after, self.unmeasured, s_lin, self.width, self.height, self._active
        )
        self._active[row] = True

        if halfwidth is not None:
            aff_lin = self.unmeasured[affected]
            inside = (
                (aff_lin // self.width >= r0)
                & (aff_lin // self.width <= r1)
                & (aff_lin % self.width >= c0)
                & (aff_lin % self.width <= c1)
            )
            affected = affected[inside]

        after_flat = self.recon_flat.copy()
        after_flat[s_lin] = truth_val
        if affected.size:
            saved = self._value_flat[s_lin]
            self._value_flat[s_lin] = truth_val
            after_flat[self.unmeasured[affected]] = idw_from_neighbors(
                comp_after[affected], self.n, self._value_flat, self.params.power
            )
            self._value_flat[s_lin] = saved

        before = exact_abs_sum(self._truth_flat[win], self.recon_flat[win])
        after = exact_abs_sum(self._truth_flat[win], after_flat[win])
        return before - after

    def rd_exact(self, s) -> float:
        """Full-image RD from measuring s at its true value."""
        return self._rd(s, None)

    def rd_windowed(self, s, halfwidth: int) -> float:
        """RD confined to the (2w+1)^2 window centered on s."""
        if halfwidth < 1:
            raise ValueError("window halfwidth must be >= 1")
        return self._rd(s, halfwidth)

    def feature_matrix(self, candidate_indices: np.ndarray) -> np.ndarray:
        """Raw descriptor rows for unmeasured pixels given as linear indices."""
        cand = np.asarray(candidate_indices, dtype=np.int64)
        rows_in_state = self._row_of[cand]
        if np.any(rows_in_state < 0):
            raise ValueError("candidates must be unmeasured")
        counts = measured_counts_grid(self.mset.mask, self.params.window)
        rr, cc = np.divmod(cand, self.width)
        return compute_feature_matrix(
            self.recon_flat.reshape(self.height, self.width),
            rr,
            cc,
            self.comp[rows_in_state],
            self._value_flat,
            counts[rr, cc],
            self.params,
        )


def rd_exact(image: GroundTruthImage, mset: MeasurementSet, s, params: IdwParams) -> float:
    """Distortion drop from measuring s, with full re-reconstruction."""
    return RdEvaluator(image, mset, params).rd_exact(s)


def rd_windowed(
    image: GroundTruthImage, mset: MeasurementSet, s, params: IdwParams, halfwidth: int
) -> float:
    """Windowed distortion drop from measuring s."""
    return RdEvaluator(image, mset, params).rd_windowed(s, halfwidth)


def _block_seed(master: int, image_index: int, density_index: int) -> int:
    ss = np.random.SeedSequence([int(master), image_index, density_index])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_training_db(
    images,
    schedule: TrainingSchedule,
    params: IdwParams,
    image_ids=None,
) -> TrainingDatabase:
    """Sample (features, windowed RD) pairs over a grid of densities.

    For every image and density, a seeded uniform mask is drawn, then up to
    samples_per_level unmeasured candidates are scored.  Each (image,
    density) block gets its own derived seed so the database is reproducible
    row for row.
    """
    images = list(images)
    if not images:
        raise ValueError("at least one image required")
    if image_ids is None:
        image_ids = [f"img{i:03d}" for i in range(len(images))]
    if len(image_ids) != len(images):
        raise ValueError("one id per image required")

    feats, rds, ids, dens, provenance = [], [], [], [], []
    for ii, image in enumerate(images):
        n = image.pixel_count
        if n < 2:
            raise ValueError("images must have at least two pixels")
        for di, density in enumerate(schedule.densities):
            if density * n < 1.0:
                raise ValueError(
                    f"density {density} yields no measurements on {image.width}x{image.height}"
                )
            n_meas = math.ceil(density * n)
            if n_meas >= n:
                raise ValueError(f"density {density} leaves no unmeasured candidates")
            seed = _block_seed(schedule.seed, ii, di)
            rng = np.random.default_rng(seed)
            chosen = rng.choice(n, size=n_meas, replace=False)
            mset = MeasurementSet(width=image.width, height=image.height)
            truth = image.values.ravel()
            for lin in chosen:
                loc = PixelLocation(int(lin) // image.width, int(lin) % image.width)
                mset.add(loc, float(truth[lin]))

            ev = RdEvaluator(image, mset, params)
            m = min(schedule.samples_per_level, ev.unmeasured.size)
            cand = rng.choice(ev.unmeasured, size=m, replace=False)
            feats.append(ev.feature_matrix(cand))
            block_rd = np.empty(m)
            for j, lin in enumerate(cand):
                loc = PixelLocation(int(lin) // image.width, int(lin) % image.width)
                block_rd[j] = ev.rd_windowed(loc, schedule.rd_window)
            rds.append(block_rd)
            ids.extend([image_ids[ii]] * m)
            dens.extend([density] * m)
            provenance.append((image_ids[ii], density, seed))

    return TrainingDatabase(
        features=np.concatenate(feats, axis=0),
        rd=np.concatenate(rds),
        image_ids=ids,
        densities=np.array(dens),
        provenance=provenance,
    )


def save_training_csv(db: TrainingDatabase, path) -> None:
    """Export rows as image_id,density,f1..f6,rd with round-trip float text."""
    lines = ["image_id,density,f1,f2,f3,f4,f5,f6,rd"]
    for i in range(db.n):
        cells = [db.image_ids[i], repr(float(db.densities[i]))]
        cells += [repr(float(x)) for x in db.features[i]]
        cells.append(repr(float(db.rd[i])))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def train_erd_model(
    images,
    schedule: TrainingSchedule,
    params: IdwParams,
    kind: str,
    activation: str = "relu",
    seed: int = 0,
    epochs: int = 500,
    pretrained: bool = False,
    extra: dict = None,
    image_ids=None,
):
    """End-to-end fit: database, standardization stats, then the regressor.

    Returns (model, database, diagnostics dict).
    """
    db = generate_training_db(images, schedule, params, image_ids=image_ids)
    stats = fit_stats(db.features)
    V = standardize(db.features, stats)
    R = db.rd
    diag = {"rows": db.n}
    if kind == "lsq":
        payload = fit_linear(V, R)
        resid = V @ payload.theta - R
        diag["residual_norm"] = float(np.linalg.norm(resid))
        diag["rank_deficient"] = payload.rank_deficient
    elif kind == "svr":
        payload = fit_svr(V, R, seed=seed)
        diag["support_vectors"] = int(payload.support_vectors.shape[0])
        diag["converged"] = payload.converged
    elif kind == "nn":
        config = MlpConfig(epochs=epochs, seed=seed, activation=activation)
        payload, final_loss = fit_mlp(V, R, config)
        diag["final_epoch_loss"] = final_loss
    else:
        raise ValueError(f"unknown regressor kind {kind!r}")
    model = ErdModel(
        kind=kind,
        payload=payload,
        stats=stats,
        idw=params,
        pretrained=pretrained,
        extra=dict(extra or {}),
    )
    return model, db, diag
