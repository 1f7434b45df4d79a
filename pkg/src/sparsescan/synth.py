"""Procedural grayscale test images.

Three families with different spatial statistics: smooth blobs, piecewise
constant patches, and oriented stripes.  All are deterministic in the seed
and live in [0, 255].
"""

import numpy as np

from .core import GroundTruthImage


def blob_image(size: int = 64, seed: int = 0, blobs: int = 6) -> GroundTruthImage:
    """Sum of random Gaussian bumps over a mid-gray background."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    values = np.full((size, size), 96.0)
    for _ in range(blobs):
        cy, cx = rng.uniform(0, size, size=2)
        sigma = rng.uniform(size / 16, size / 5)
        amp = rng.uniform(-80.0, 140.0)
        values += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
    return GroundTruthImage.from_array(np.clip(values, 0.0, 255.0))


def patch_image(size: int = 64, seed: int = 0, patches: int = 8) -> GroundTruthImage:
    """Piecewise constant rectangles, hard edges, flat interiors."""
    rng = np.random.default_rng(seed)
    values = np.full((size, size), float(rng.integers(0, 256)))
    for _ in range(patches):
        h = int(rng.integers(size // 8, size // 2 + 1))
        w = int(rng.integers(size // 8, size // 2 + 1))
        r = int(rng.integers(0, size - h + 1))
        c = int(rng.integers(0, size - w + 1))
        values[r : r + h, c : c + w] = float(rng.integers(0, 256))
    return GroundTruthImage.from_array(values)


def stripe_image(size: int = 64, seed: int = 0) -> GroundTruthImage:
    """Oriented sinusoidal stripes with a mild nonlinearity."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, np.pi)
    freq = rng.uniform(2.0, 6.0) * 2.0 * np.pi / size
    phase = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    t = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
    values = 127.5 + 110.0 * np.sign(t) * np.abs(t) ** 0.7
    return GroundTruthImage.from_array(np.clip(values, 0.0, 255.0))


def generic_texture(size: int = 128) -> GroundTruthImage:
    """Fixed composite image used when no training inputs are supplied."""
    base = blob_image(size=size, seed=2024, blobs=10).values
    overlay = patch_image(size=size, seed=2025, patches=5).values
    mix = 0.65 * base + 0.35 * overlay
    return GroundTruthImage.from_array(np.clip(mix, 0.0, 255.0))
