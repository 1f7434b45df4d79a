"""Least-squares regressor against a pseudo-inverse oracle."""

import numpy as np
import pytest

from sparsescan.regress.linear import LinearModel, fit_linear


class TestFitLinear:
    def test_matches_pinv_oracle_on_random_systems(self):
        # independent oracle: theta = pinv(V) @ R via SVD
        rng = np.random.default_rng(0)
        for trial in range(50):
            V = rng.standard_normal((200, 6))
            R = rng.standard_normal(200)
            model = fit_linear(V, R)
            oracle = np.linalg.pinv(V) @ R
            rel = np.linalg.norm(model.theta - oracle) / np.linalg.norm(oracle)
            assert rel < 1e-8
            assert not model.rank_deficient

    def test_exact_recovery_of_planted_coefficients(self):
        rng = np.random.default_rng(1)
        theta_true = np.array([2.0, -1.0, 0.5, 3.0, 0.0, -2.5])
        V = rng.standard_normal((300, 6))
        R = V @ theta_true
        model = fit_linear(V, R)
        np.testing.assert_allclose(model.theta, theta_true, atol=1e-10)

    def test_rank_deficient_flags_and_min_norm(self):
        rng = np.random.default_rng(2)
        V = rng.standard_normal((100, 6))
        V[:, 5] = V[:, 0]  # exact duplicate column -> rank 5
        R = rng.standard_normal(100)
        model = fit_linear(V, R)
        assert model.rank_deficient
        oracle = np.linalg.pinv(V) @ R  # pinv gives the min-norm solution
        np.testing.assert_allclose(model.theta, oracle, atol=1e-10)

    def test_normal_equations_residual_orthogonality(self):
        # at the optimum, V^T (V theta - R) = 0
        rng = np.random.default_rng(3)
        V = rng.standard_normal((150, 6))
        R = rng.standard_normal(150)
        model = fit_linear(V, R)
        grad = V.T @ (V @ model.theta - R)
        assert np.max(np.abs(grad)) < 1e-10

    def test_underdetermined_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            fit_linear(rng.standard_normal((4, 6)), rng.standard_normal(4))

    def test_model_validates_theta(self):
        with pytest.raises(ValueError):
            LinearModel(theta=np.array([np.inf] * 6), rank_deficient=False)
