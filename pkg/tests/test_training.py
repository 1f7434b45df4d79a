"""Tests for RD targets and training database generation."""

import numpy as np
import pytest
from scipy.stats import spearmanr

from sparsescan.core import (
    GroundTruthImage,
    MeasurementSet,
    PixelLocation,
    distortion,
)
from sparsescan.recon import IdwParams, reconstruct
from sparsescan.regress import predict_batch
from sparsescan.synth import blob_image
from sparsescan.training import (
    RdEvaluator,
    TrainingDatabase,
    TrainingSchedule,
    generate_training_db,
    rd_exact,
    rd_windowed,
    save_training_csv,
    train_erd_model,
)

PARAMS = IdwParams(neighbors=10, power=2.0, window=15)


def loc_of(lin, width):
    return PixelLocation(int(lin) // width, int(lin) % width)


def random_setup(image, frac, seed):
    """Measure a seeded uniform fraction of the image at its true values."""
    rng = np.random.default_rng(seed)
    n = image.pixel_count
    mset = MeasurementSet(width=image.width, height=image.height)
    flat = image.values.ravel()
    for lin in rng.choice(n, size=max(1, int(round(frac * n))), replace=False):
        mset.add(loc_of(lin, image.width), float(flat[lin]))
    return mset


def pipeline_rd(image, mset, s, params):
    """Independent oracle: rebuild reconstructions from scratch, subtract."""
    before = distortion(image.values, reconstruct(mset, params).values)
    grown = MeasurementSet(width=image.width, height=image.height)
    for loc, val in mset.entries:
        grown.add(loc, val)
    grown.add(s, float(image.values[s.row, s.col]))
    after = distortion(image.values, reconstruct(grown, params).values)
    return before - after


class TestRdHandCases:
    def tiny(self, vals, measured_cols):
        img = GroundTruthImage(width=3, height=1, values=np.array([vals]))
        mset = MeasurementSet(width=3, height=1)
        for c in measured_cols:
            mset.add(PixelLocation(0, c), float(vals[c]))
        return img, mset

    def test_midpoint_between_unequal_ends(self):
        # ends 0 and 100 sit at equal distance from the middle, so the
        # estimate there is their plain mean 50; truth is 0, so the error
        # is 50 and measuring the middle removes all of it
        img, mset = self.tiny([0.0, 0.0, 100.0], (0, 2))
        assert rd_exact(img, mset, PixelLocation(0, 1), PARAMS) == 50.0

    def test_peak_between_equal_ends(self):
        # both ends are 0, the middle is estimated 0 while truth is 100
        img, mset = self.tiny([0.0, 100.0, 0.0], (0, 2))
        assert rd_exact(img, mset, PixelLocation(0, 1), PARAMS) == 100.0
        assert rd_windowed(img, mset, PixelLocation(0, 1), PARAMS, 5) == 100.0

    def test_constant_image_rd_negligible(self):
        # weighted means of equal values round at the last few bits, so the
        # drop is bounded near zero rather than exactly zero
        img = GroundTruthImage(width=16, height=16, values=np.full((16, 16), 77.0))
        mset = random_setup(img, 0.1, seed=0)
        ev = RdEvaluator(img, mset, PARAMS)
        for lin in ev.unmeasured[:40]:
            s = loc_of(lin, 16)
            assert abs(ev.rd_exact(s)) <= 1e-9
            assert abs(ev.rd_windowed(s, 4)) <= 1e-9

    def test_measured_candidate_rejected(self):
        img, mset = self.tiny([0.0, 50.0, 100.0], (0, 2))
        with pytest.raises(ValueError):
            rd_exact(img, mset, PixelLocation(0, 0), PARAMS)
        with pytest.raises(ValueError):
            rd_windowed(img, mset, PixelLocation(0, 2), PARAMS, 3)

    def test_out_of_grid_candidate_rejected(self):
        img, mset = self.tiny([0.0, 50.0, 100.0], (0,))
        with pytest.raises(ValueError):
            rd_exact(img, mset, PixelLocation(1, 0), PARAMS)

    def test_empty_and_saturated_sets_rejected(self):
        img = GroundTruthImage(width=2, height=2, values=np.zeros((2, 2)))
        with pytest.raises(ValueError):
            RdEvaluator(img, MeasurementSet(width=2, height=2), PARAMS)
        full = MeasurementSet(width=2, height=2)
        for r in range(2):
            for c in range(2):
                full.add(PixelLocation(r, c), 0.0)
        with pytest.raises(ValueError):
            RdEvaluator(img, full, PARAMS)

    def test_bad_halfwidth_rejected(self):
        img, mset = self.tiny([0.0, 50.0, 100.0], (0,))
        with pytest.raises(ValueError):
            rd_windowed(img, mset, PixelLocation(0, 1), PARAMS, 0)


class TestRdOracle:
    def test_matches_independent_pipeline_bit_exactly(self):
        image = blob_image(size=16, seed=3)
        mset = random_setup(image, 0.1, seed=1)
        ev = RdEvaluator(image, mset, PARAMS)
        for lin in ev.unmeasured:
            s = loc_of(lin, 16)
            want = pipeline_rd(image, mset, s, PARAMS)
            assert ev.rd_exact(s) == want
            assert rd_exact(image, mset, s, PARAMS) == want

    def test_windowed_equals_exact_at_full_width(self):
        for seed in (0, 1):
            image = blob_image(size=32, seed=seed)
            mset = random_setup(image, 0.1, seed=seed + 10)
            ev = RdEvaluator(image, mset, PARAMS)
            for lin in ev.unmeasured[::7]:
                s = loc_of(lin, 32)
                assert ev.rd_windowed(s, 32) == ev.rd_exact(s)

    def test_windowed_stabilizes_past_update_radius(self):
        # once the window holds every pixel the new measurement actually
        # touched, the untouched remainder cancels up to summation rounding;
        # the touched radius is read off the two full reconstructions
        image = blob_image(size=32, seed=5)
        mset = random_setup(image, 0.15, seed=2)
        before = reconstruct(mset, PARAMS).values
        ev = RdEvaluator(image, mset, PARAMS)
        for lin in ev.unmeasured[:25]:
            s = loc_of(lin, 32)
            grown = MeasurementSet(width=32, height=32)
            for loc, val in mset.entries:
                grown.add(loc, val)
            grown.add(s, float(image.values[s.row, s.col]))
            after = reconstruct(grown, PARAMS).values
            rows, cols = np.nonzero(before != after)
            radius = int(np.max(np.maximum(np.abs(rows - s.row), np.abs(cols - s.col))))
            w = max(radius, 1)
            assert abs(ev.rd_windowed(s, w) - ev.rd_exact(s)) <= 1e-9

    def test_window_ranking_tracks_exact_ranking(self):
        image = blob_image(size=64, seed=7)
        mset = random_setup(image, 0.1, seed=3)
        ev = RdEvaluator(image, mset, PARAMS)
        rng = np.random.default_rng(4)
        cand = rng.choice(ev.unmeasured, size=100, replace=False)
        exact = np.array([ev.rd_exact(loc_of(l, 64)) for l in cand])
        windowed = np.array([ev.rd_windowed(loc_of(l, 64), 15) for l in cand])
        rho = spearmanr(exact, windowed).statistic
        assert rho >= 0.95

    def test_mean_rd_positive_on_textured_image(self):
        image = blob_image(size=32, seed=9)
        mset = random_setup(image, 0.1, seed=5)
        ev = RdEvaluator(image, mset, PARAMS)
        vals = [ev.rd_exact(loc_of(l, 32)) for l in ev.unmeasured[::5]]
        assert np.mean(vals) > 0.0


class TestGenerateDb:
    def test_row_counting_and_provenance(self):
        image = blob_image(size=16, seed=0)
        schedule = TrainingSchedule(densities=(0.1,), samples_per_level=10, seed=7)
        db = generate_training_db([image], schedule, PARAMS)
        assert db.n == 10
        assert db.features.shape == (10, 6)
        assert db.image_ids == ["img000"] * 10
        np.testing.assert_array_equal(db.densities, np.full(10, 0.1))
        assert len(db.provenance) == 1
        pid, pdens, pseed = db.provenance[0]
        assert pid == "img000" and pdens == 0.1 and isinstance(pseed, int)

    def test_blocks_multiply_across_images_and_densities(self):
        images = [blob_image(size=16, seed=s) for s in (0, 1)]
        schedule = TrainingSchedule(densities=(0.1, 0.3), samples_per_level=5)
        db = generate_training_db(images, schedule, PARAMS, image_ids=["a", "b"])
        assert db.n == 2 * 2 * 5
        assert len(db.provenance) == 4
        assert {p[0] for p in db.provenance} == {"a", "b"}

    def test_runs_are_reproducible(self, tmp_path):
        image = blob_image(size=16, seed=2)
        schedule = TrainingSchedule(densities=(0.1, 0.2), samples_per_level=8, seed=3)
        a = generate_training_db([image], schedule, PARAMS)
        b = generate_training_db([image], schedule, PARAMS)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.rd, b.rd)
        assert a.provenance == b.provenance
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        save_training_csv(a, pa)
        save_training_csv(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_seed_changes_the_rows(self):
        image = blob_image(size=16, seed=2)
        a = generate_training_db(
            [image], TrainingSchedule(densities=(0.1,), samples_per_level=8, seed=0), PARAMS
        )
        b = generate_training_db(
            [image], TrainingSchedule(densities=(0.1,), samples_per_level=8, seed=1), PARAMS
        )
        assert not np.array_equal(a.rd, b.rd)

    def test_constant_image_gives_negligible_targets(self):
        image = GroundTruthImage(width=16, height=16, values=np.full((16, 16), 30.0))
        schedule = TrainingSchedule(densities=(0.2,), samples_per_level=20)
        db = generate_training_db([image], schedule, PARAMS)
        assert np.max(np.abs(db.rd)) <= 1e-9

    def test_candidates_capped_by_unmeasured_count(self):
        image = blob_image(size=4, seed=0)
        schedule = TrainingSchedule(densities=(0.5,), samples_per_level=500)
        db = generate_training_db([image], schedule, PARAMS)
        assert db.n == 16 - 8

    def test_degenerate_inputs_rejected(self):
        image = blob_image(size=4, seed=0)
        with pytest.raises(ValueError):
            generate_training_db([], TrainingSchedule(), PARAMS)
        with pytest.raises(ValueError):
            generate_training_db([image], TrainingSchedule(), PARAMS, image_ids=["a", "b"])
        # 16 pixels at 1% rounds below one measurement
        with pytest.raises(ValueError):
            generate_training_db(
                [image], TrainingSchedule(densities=(0.01,), samples_per_level=1), PARAMS
            )
        single = GroundTruthImage(width=1, height=1, values=np.zeros((1, 1)))
        with pytest.raises(ValueError):
            generate_training_db(
                [single], TrainingSchedule(densities=(0.5,), samples_per_level=1), PARAMS
            )
        # ceil(0.9 * 2) = 2 measured leaves nothing to score
        two = GroundTruthImage(width=2, height=1, values=np.zeros((1, 2)))
        with pytest.raises(ValueError):
            generate_training_db(
                [two], TrainingSchedule(densities=(0.9,), samples_per_level=1), PARAMS
            )

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            TrainingSchedule(densities=())
        with pytest.raises(ValueError):
            TrainingSchedule(densities=(0.3, 0.2))
        with pytest.raises(ValueError):
            TrainingSchedule(densities=(0.0, 0.5))
        with pytest.raises(ValueError):
            TrainingSchedule(samples_per_level=0)
        with pytest.raises(ValueError):
            TrainingSchedule(rd_window=0)

    def test_database_validation(self):
        with pytest.raises(ValueError):
            TrainingDatabase(
                features=np.ones((2, 6)),
                rd=np.array([1.0, np.inf]),
                image_ids=["a", "a"],
                densities=np.full(2, 0.1),
                provenance=[],
            )
        with pytest.raises(ValueError):
            TrainingDatabase(
                features=np.ones((2, 5)),
                rd=np.ones(2),
                image_ids=["a", "a"],
                densities=np.full(2, 0.1),
                provenance=[],
            )


class TestCsv:
    def test_round_trip_text(self, tmp_path):
        image = blob_image(size=16, seed=4)
        schedule = TrainingSchedule(densities=(0.1,), samples_per_level=6)
        db = generate_training_db([image], schedule, PARAMS)
        path = tmp_path / "db.csv"
        save_training_csv(db, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "image_id,density,f1,f2,f3,f4,f5,f6,rd"
        assert len(lines) == 1 + db.n
        for i, line in enumerate(lines[1:]):
            cells = line.split(",")
            assert cells[0] == db.image_ids[i]
            assert float(cells[1]) == db.densities[i]
            got = np.array([float(x) for x in cells[2:8]])
            np.testing.assert_array_equal(got, db.features[i])
            assert float(cells[8]) == db.rd[i]

    def test_write_is_atomic_and_overwrites(self, tmp_path):
        image = blob_image(size=16, seed=4)
        db = generate_training_db(
            [image], TrainingSchedule(densities=(0.1,), samples_per_level=3), PARAMS
        )
        path = tmp_path / "db.csv"
        path.write_text("stale")
        save_training_csv(db, path)
        assert path.read_text().startswith("image_id,")
        assert [p.name for p in tmp_path.iterdir()] == ["db.csv"]  # no temp droppings


class TestTrainModel:
    def test_lsq_end_to_end(self):
        images = [blob_image(size=16, seed=s) for s in (0, 1)]
        schedule = TrainingSchedule(densities=(0.1, 0.3), samples_per_level=20)
        model, db, diag = train_erd_model(images, schedule, PARAMS, kind="lsq")
        assert model.kind == "lsq"
        assert diag["rows"] == db.n == 2 * 2 * 20
        assert "residual_norm" in diag and "rank_deficient" in diag
        assert model.idw == PARAMS
        preds = predict_batch(model, db.features)
        assert preds.shape == (db.n,) and np.all(np.isfinite(preds))

    def test_nn_and_svr_smoke(self):
        image = blob_image(size=16, seed=2)
        schedule = TrainingSchedule(densities=(0.2,), samples_per_level=30)
        nn, _, nn_diag = train_erd_model(
            [image], schedule, PARAMS, kind="nn", epochs=3, seed=1
        )
        assert nn.payload.activation == "relu"
        assert "final_epoch_loss" in nn_diag
        svr, _, svr_diag = train_erd_model([image], schedule, PARAMS, kind="svr")
        assert svr_diag["support_vectors"] >= 1
        assert "converged" in svr_diag

    def test_unknown_kind_rejected(self):
        image = blob_image(size=16, seed=2)
        with pytest.raises(ValueError):
            train_erd_model(
                [image],
                TrainingSchedule(densities=(0.2,), samples_per_level=5),
                PARAMS,
                kind="forest",
            )

    def test_pretrained_and_extra_reach_the_model(self):
        image = blob_image(size=16, seed=2)
        model, _, _ = train_erd_model(
            [image],
            TrainingSchedule(densities=(0.2,), samples_per_level=10),
            PARAMS,
            kind="lsq",
            pretrained=True,
            extra={"origin": "builtin"},
        )
        assert model.pretrained is True
        assert model.extra == {"origin": "builtin"}
