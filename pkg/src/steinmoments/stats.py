"""Batch-means estimators shared by the simulation modules."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import ConfigError, MomentEstimate, MomentOrder


def batch_means(values: np.ndarray, n_batches: int) -> np.ndarray:
    """Means of ``n_batches`` contiguous, equal-sized blocks of ``values``."""
    values = np.asarray(values, dtype=float)
    if n_batches < 2:
        raise ConfigError(f"need at least 2 batches, got {n_batches}")
    if values.size % n_batches:
        raise ConfigError(f"{values.size} samples do not split into {n_batches} equal batches")
    return values.reshape(n_batches, -1).mean(axis=1)


def norm_estimate(values: np.ndarray, order, n_batches: int,
                  center: float = 0.0, center_influence: Optional[np.ndarray] = None) -> MomentEstimate:
    """Estimate ||X - center||_r with a batch-means delta-method error.

    ``center_influence`` supplies per-sample values whose batch means absorb
    the extra variance of a plug-in centre; pass ``values`` themselves when
    the centre is their own sample mean.
    """
    r = MomentOrder.of(order)
    x = np.asarray(values, dtype=float)
    powered = np.abs(x - center) ** r.value
    b = batch_means(powered, n_batches)
    m = float(b.mean())
    if center_influence is not None:
        # d/dc E|X - c|^r = -r E[|X - c|^(r-1) sgn(X - c)]
        dev = x - center
        slope = -r.value * float(np.mean(np.abs(dev) ** (r.value - 1) * np.sign(dev)))
        b = b + slope * batch_means(center_influence, n_batches)
    se_m = float(b.std(ddof=1)) / math.sqrt(n_batches)
    if m > 0.0:
        point = m ** (1.0 / r.value)
        se = point * se_m / (r.value * m)
    else:
        point, se = 0.0, 0.0
    return MomentEstimate(r, point, se, int(x.size), int(n_batches))
