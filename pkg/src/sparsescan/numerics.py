"""Low-level numeric helpers with strict determinism guarantees.

Greedy selection and the lazy rescoring path require that scoring a subset of
candidate rows produces bit-identical numbers to scoring the full batch.  BLAS
matmul does not guarantee that (its reduction order can depend on the batch
shape), so every prediction path funnels through the einsum wrappers below,
whose per-element reduction order depends only on the contracted length.
"""

import math

import numpy as np


def stable_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(m, k) @ (k, n) with batch-composition-stable rounding."""
    return np.einsum("ij,jk->ik", a, b)


def stable_matvec(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(m, k) @ (k,) with batch-composition-stable rounding."""
    return np.einsum("ij,j->i", a, v)


def stable_cross_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of a (m, t) and b (n, t)."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    cross = np.einsum("ij,kj->ik", a, b)
    d2 = aa[:, None] + bb[None, :] - 2.0 * cross
    # negative values only from rounding; distances are squared magnitudes
    return np.maximum(d2, 0.0)


def exact_abs_sum(a: np.ndarray, b: np.ndarray) -> float:
    """Exactly rounded sum of |a - b|.

    math.fsum returns the correctly rounded float64 sum, so the result is
    independent of element order and of how the inputs were sliced.
    """
    return math.fsum(np.abs(np.ravel(a) - np.ravel(b)).tolist())


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Map real intensities to uint8, rounding halves away from zero."""
    v = np.asarray(values, dtype=np.float64)
    q = np.floor(np.abs(v) + 0.5) * np.sign(v)
    return np.clip(q, 0.0, 255.0).astype(np.uint8)
