"""Reconstruction metrics: mean squared error and PSNR."""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .errors import ShapeError
from .tensor import Tensor


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes differ, {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / mse) over all pixels and channels jointly.

    Identical inputs return +inf as the zero-error sentinel.
    """
    m = mse(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def psnr_from_mse(m: float, peak: float = 1.0) -> float:
    if m <= 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Differentiable mean squared error between two graph tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mse_loss: shapes differ, {a.shape} vs {b.shape}")
    d = ops.sub(a, b)
    return ops.mean_all(ops.mul(d, d))
