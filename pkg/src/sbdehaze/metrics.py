"""Evaluation metrics: PSNR, SSIM value and the energy distance between point sets."""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from . import tensor as T
from .regularizers import HfdConfig, ssim

PSNR_SENTINEL = 99.0


def psnr(a, b):
    """Peak signal-to-noise ratio for images in [0, 1]; identical inputs give 99 dB."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return 10.0 * np.log10(1.0 / mse)


def ssim_value(a, b, cfg=None):
    """SSIM of two (3, H, W) or (N, 3, H, W) images as a float."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.ndim == 3:
        a, b = a[None], b[None]
    with T.no_grad(), T.precision("float64"):
        return float(ssim(a, b, cfg or HfdConfig()).data)


def energy_distance(x, y):
    """Two-sample energy distance ``2 E|X-Y| - E|X-X'| - E|Y-Y'|`` (V-statistic)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(2.0 * cdist(x, y).mean() - cdist(x, x).mean() - cdist(y, y).mean())
