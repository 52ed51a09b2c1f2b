"""Pixel batch sampling for finetuning.

Batches are a pure function of (seed, effective step), where the effective
step is floor(iteration / every_p): with every_p > 1 consecutive iterations
reuse the identical batch, re-drawing only every p-th iteration. Sampling is
uniform over the pixel grid, with replacement.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .errors import ConfigError, ShapeError


def _check_batch(n: int, every_p: int) -> None:
    if n <= 0:
        raise ConfigError(f"batch size must be positive, got {n}")
    if every_p < 1:
        raise ConfigError(f"every_p must be >= 1, got {every_p}")


def sample_pixels(h: int, w: int, n: int, seed: int, iteration: int = 0,
                  every_p: int = 1) -> np.ndarray:
    """Uniform (x, y) pixel coordinates, shape (n, 2)."""
    _check_batch(n, every_p)
    if h < 1 or w < 1:
        raise ConfigError(f"empty pixel grid {h}x{w}")
    step = iteration // every_p
    gen = rng.stream(seed, "pixels", step)
    flat = gen.integers(0, h * w, size=n)
    return np.stack([flat % w, flat // w], axis=1).astype(np.int64)


def sample_from_pool(pool_xy: np.ndarray, n: int, seed: int,
                     iteration: int = 0, every_p: int = 1) -> np.ndarray:
    """Uniform draw from an explicit coordinate pool (used by the binary-
    mask metadata scheme to restrict finetuning to flagged pixels)."""
    _check_batch(n, every_p)
    pool_xy = np.asarray(pool_xy)
    if pool_xy.ndim != 2 or pool_xy.shape[1] != 2 or not pool_xy.size:
        raise ShapeError(f"pixel pool must be a non-empty (m,2) array, got "
                         f"{pool_xy.shape}")
    step = iteration // every_p
    gen = rng.stream(seed, "pixels-pool", step)
    return pool_xy[gen.integers(0, pool_xy.shape[0], size=n)]


def error_weighted_sample(pair, n: int, seed: int) -> np.ndarray:
    """(x, y) coordinates drawn proportionally to per-pixel mean absolute
    residual |x - y|; an all-zero residual falls back to uniform."""
    if n <= 0:
        raise ConfigError(f"batch size must be positive, got {n}")
    if hasattr(pair, "x"):
        x_img, y_img = pair.x, pair.y
    else:
        x_img, y_img = pair
    x_img = np.asarray(x_img, dtype=np.float64)
    y_img = np.asarray(y_img, dtype=np.float64)
    if x_img.shape != y_img.shape:
        raise ShapeError(f"pair shapes differ: {x_img.shape} vs "
                         f"{y_img.shape}")
    h, w = x_img.shape[:2]
    residual = np.abs(x_img - y_img).mean(axis=2)
    gen = rng.stream(seed, "wsample")
    peak = residual.max()
    if peak == 0.0:
        flat = gen.integers(0, h * w, size=n)
    else:
        weights = residual.reshape(-1) + 1e-12 * peak
        flat = gen.choice(h * w, size=n, replace=True,
                          p=weights / weights.sum())
    return np.stack([flat % w, flat // w], axis=1).astype(np.int64)
