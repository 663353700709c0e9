"""Full-reference quality scores and rank-correlation statistics."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage, stats

from .imagecore import DimensionError, as_image
from .prior import PriorBundle, default_prior, naturalness_factor
from .spectrum import UndefinedCorrelationError, accumulate, distance

__all__ = ["PSNR_CAP", "psnr", "ssim", "score", "score_nf", "rank_correlations"]

PSNR_CAP = 99.0
SSIM_WINDOW = 8
K1, K2 = 0.01, 0.03


def _pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """``10 log10(1 / MSE)`` for intensities in [0, 1]; identical images give 99 dB."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over all 8x8 windows (uniform weights, K1=0.01, K2=0.03)."""
    a, b = _pair(a, b)
    w = SSIM_WINDOW
    if min(a.shape) < w:
        raise DimensionError(f"images must be at least {w}x{w} for SSIM")
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2

    def mean(x):
        # uniform_filter centers the window; crop to windows fully inside.
        m = ndimage.uniform_filter(x, size=w, mode="constant")
        o = w // 2
        return m[o:o + a.shape[0] - w + 1, o:o + a.shape[1] - w + 1]

    n = w * w
    mu_a, mu_b = mean(a), mean(b)
    cov_scale = n / (n - 1)
    var_a = (mean(a * a) - mu_a ** 2) * cov_scale
    var_b = (mean(b * b) - mu_b ** 2) * cov_scale
    cov = (mean(a * b) - mu_a * mu_b) * cov_scale
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(np.clip(s.mean(), -1.0, 1.0))


def score(img, reference, metric: str = "hellinger") -> float:
    """Distance between gradient distributions.

    ``reference`` may be an image (full-reference score) or a
    :class:`PriorBundle` (no-reference score against the prior).
    """
    h = accumulate(img)
    ref = reference.hist if isinstance(reference, PriorBundle) else accumulate(reference)
    return distance(ref, h, metric)


def score_nf(img, reference, prior: PriorBundle | None = None) -> float:
    """``|N_f(reference) - N_f(img)|``."""
    prior = prior or default_prior()
    return abs(naturalness_factor(reference, prior) - naturalness_factor(img, prior))


def rank_correlations(x, y) -> dict:
    """Pearson, Spearman (average ranks) and Kendall tau-b correlations."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError("x and y must be 1D sequences of equal length")
    if x.size < 3:
        raise ValueError("need at least 3 pairs")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("values must be finite")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("a sequence has zero variance")
    return {
        "PCC": float(stats.pearsonr(x, y)[0]),
        "SCC": float(stats.spearmanr(x, y)[0]),
        "KCC": float(stats.kendalltau(x, y, variant="b")[0]),
    }
