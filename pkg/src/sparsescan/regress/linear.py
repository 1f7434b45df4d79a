"""Least squares ERD regressor."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearModel:
    theta: np.ndarray  # (feature_count,)
    rank_deficient: bool = False

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=np.float64)
        if t.ndim != 1:
            raise ValueError("theta must be a vector")
        if not np.all(np.isfinite(t)):
            raise ValueError("theta must be finite")
        object.__setattr__(self, "theta", t)


def fit_linear(V: np.ndarray, R: np.ndarray) -> LinearModel:
    """Solve min ||V theta - R||_2 by SVD; minimum-norm on rank deficiency.

    The orthogonal factorization route avoids forming V^T V explicitly.  A
    rank-deficient design still yields the minimum-norm solution, flagged on
    the returned model.
    """
    V = np.asarray(V, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if V.ndim != 2 or R.shape != (V.shape[0],):
        raise ValueError("expected V (n, t) and R (n,)")
    if V.shape[0] < V.shape[1]:
        raise ValueError(f"need at least {V.shape[1]} rows, got {V.shape[0]}")
    theta, _, rank, _ = np.linalg.lstsq(V, R, rcond=None)
    return LinearModel(theta=theta, rank_deficient=bool(rank < V.shape[1]))
