"""Empirical gradient distributions and the statistics computed on them.

A :class:`GradHist2D` is a 511 x 511 probability table over integer gradient
pairs ``(u, v)`` in ``[-255, 255]^2``.  Row index is ``v + 255`` (the y
component), column index ``u + 255`` (the x component), so ``bins[v, u]``
follows the usual image ``[row, col]`` order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .imagecore import GradientField, as_image, gradient

__all__ = [
    "NBINS",
    "BIN_VALUES",
    "UndefinedCorrelationError",
    "DivergenceError",
    "GradHist2D",
    "accumulate",
    "accumulate_field",
    "merge",
    "merge_all",
    "marginal",
    "cdf2d",
    "distance",
    "DISTANCE_METRICS",
    "entropy",
    "sparsity_curve",
    "component_correlation",
    "autocorrelation",
    "marginal_to_csv",
]

RANGE = 255
NBINS = 2 * RANGE + 1
BIN_VALUES = np.arange(-RANGE, RANGE + 1, dtype=np.float64)
KL_EPS = 1e-12

WeightMode = Literal["images", "pixels"]


class UndefinedCorrelationError(ValueError):
    """A correlation was requested on data with zero variance."""


class DivergenceError(ValueError):
    """KL divergence is infinite (support of p not contained in support of q)."""


@dataclass(frozen=True)
class GradHist2D:
    bins: np.ndarray
    count: int = 0
    images: int = 1
    weight_mode: WeightMode = "images"

    def __post_init__(self):
        if self.bins.shape != (NBINS, NBINS):
            raise ValueError(f"histogram must be {NBINS}x{NBINS}, got {self.bins.shape}")

    @classmethod
    def delta(cls, u: int = 0, v: int = 0) -> "GradHist2D":
        b = np.zeros((NBINS, NBINS))
        b[v + RANGE, u + RANGE] = 1.0
        return cls(b, count=1, images=1)

    @classmethod
    def from_probabilities(cls, p, count: int = 0, images: int = 1,
                           weight_mode: WeightMode = "images") -> "GradHist2D":
        p = np.asarray(p, dtype=np.float64)
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        s = p.sum()
        if s <= 0:
            raise ValueError("histogram has no mass")
        return cls(p / s, count=count, images=images, weight_mode=weight_mode)

    def to_json(self, elide_zeros: bool = True) -> dict:
        doc = {
            "version": 1,
            "bin_range": [-RANGE, RANGE],
            "weight_mode": self.weight_mode,
            "image_count": int(self.images),
            "pixel_count": int(self.count),
        }
        if elide_zeros:
            idx = np.flatnonzero(self.bins)
            doc["sparse"] = {"index": idx.tolist(), "probabilities": self.bins.ravel()[idx].tolist()}
        else:
            doc["probabilities"] = self.bins.ravel().tolist()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "GradHist2D":
        if list(doc.get("bin_range", [-RANGE, RANGE])) != [-RANGE, RANGE]:
            raise ValueError("unsupported bin range")
        bins = np.zeros(NBINS * NBINS)
        if "sparse" in doc:
            bins[np.asarray(doc["sparse"]["index"], dtype=int)] = doc["sparse"]["probabilities"]
        else:
            bins[:] = doc["probabilities"]
        return cls(bins.reshape(NBINS, NBINS), count=int(doc.get("pixel_count", 0)),
                   images=int(doc.get("image_count", 1)),
                   weight_mode=doc.get("weight_mode", "images"))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


# --------------------------------------------------------------------------
# Construction
# --------------------------------------------------------------------------

def _to_bins(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values * 255.0), -RANGE, RANGE).astype(np.int64) + RANGE


def accumulate_field(g: GradientField, mask=None) -> GradHist2D:
    """Histogram of the gradient pairs at pixels where both components are valid."""
    valid = g.valid_mask if mask is None else (g.valid_mask & mask)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid gradient pairs to accumulate")
    u = _to_bins(g.gx[valid])
    v = _to_bins(g.gy[valid])
    counts = np.bincount(v * NBINS + u, minlength=NBINS * NBINS).astype(np.float64)
    return GradHist2D(counts.reshape(NBINS, NBINS) / n, count=n, images=1)


def accumulate(img) -> GradHist2D:
    """Normalized 2D gradient histogram of one image (gradients scaled by 255, rounded)."""
    return accumulate_field(gradient(as_image(img)))


def merge(a: GradHist2D, b: GradHist2D, weight_by: WeightMode = "images") -> GradHist2D:
    """Convex combination of two normalized histograms.

    ``images`` weights every contributing image equally, ``pixels`` weights
    by accumulated pixel counts.
    """
    if weight_by == "images":
        wa, wb = a.images, b.images
    elif weight_by == "pixels":
        wa, wb = a.count, b.count
    else:
        raise ValueError(f"unknown weight mode {weight_by!r}")
    tot = wa + wb
    if tot <= 0:
        raise ValueError("cannot merge histograms with zero weight")
    bins = (wa * a.bins + wb * b.bins) / tot
    return GradHist2D(bins, count=a.count + b.count, images=a.images + b.images,
                      weight_mode=weight_by)


def merge_all(hists: Iterable[GradHist2D], weight_by: WeightMode = "images") -> GradHist2D:
    hists = list(hists)
    if not hists:
        raise ValueError("nothing to merge")
    if weight_by == "images":
        w = np.array([h.images for h in hists], dtype=np.float64)
    else:
        w = np.array([h.count for h in hists], dtype=np.float64)
    bins = np.zeros((NBINS, NBINS))
    for wi, h in zip(w, hists):
        bins += wi * h.bins
    bins /= w.sum()
    return GradHist2D(bins, count=sum(h.count for h in hists),
                      images=sum(h.images for h in hists), weight_mode=weight_by)


# --------------------------------------------------------------------------
# Derived distributions
# --------------------------------------------------------------------------

def marginal(h: GradHist2D, axis: Literal["x", "y"] = "x") -> np.ndarray:
    """1D marginal over ``[-255, 255]`` for the x (column) or y (row) component."""
    if axis == "x":
        m = h.bins.sum(axis=0)
    elif axis == "y":
        m = h.bins.sum(axis=1)
    else:
        raise ValueError("axis must be 'x' or 'y'")
    return m / m.sum()


def cdf2d(h: GradHist2D) -> np.ndarray:
    """Inclusive 2D prefix sum, ``C[v, u] = P(Gy <= v, Gx <= u)``."""
    c = np.cumsum(np.cumsum(h.bins, axis=0), axis=1)
    return c / c[-1, -1]


# --------------------------------------------------------------------------
# Distances
# --------------------------------------------------------------------------

def _w1_1d(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.abs(np.cumsum(p) - np.cumsum(q)).sum())


def distance(p: GradHist2D, q: GradHist2D, metric: str = "hellinger", *,
             smooth: bool = True) -> float:
    """Distance between two gradient distributions.

    Metrics: ``l1``, ``l2``, ``rms`` (l2 per bin), ``cosine``, ``chi2``,
    ``hellinger``, ``kl`` (``KL(p || q)``) and ``emd_marginal`` (mean of the
    1D Wasserstein-1 distances between the x and y marginals, in bin units).
    With ``smooth`` the KL reference ``q`` gets 1e-12 added to every bin and is
    renormalized.
    """
    a = p.bins
    b = q.bins
    if metric == "l1":
        return float(np.abs(a - b).sum())
    if metric == "l2":
        return float(np.sqrt(((a - b) ** 2).sum()))
    if metric == "rms":
        return float(np.sqrt(((a - b) ** 2).mean()))
    if metric == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        return float(max(0.0, 1.0 - (a * b).sum() / (na * nb)))
    if metric == "chi2":
        s = a + b
        nz = s > 0
        return float(0.5 * ((a[nz] - b[nz]) ** 2 / s[nz]).sum())
    if metric == "hellinger":
        val = 0.5 * ((np.sqrt(a) - np.sqrt(b)) ** 2).sum()
        return float(np.sqrt(min(max(val, 0.0), 1.0)))
    if metric == "kl":
        return _kl(a, b, smooth)
    if metric == "emd_marginal":
        return 0.5 * (_w1_1d(marginal(p, "x"), marginal(q, "x"))
                      + _w1_1d(marginal(p, "y"), marginal(q, "y")))
    raise ValueError(f"unknown metric {metric!r}")


DISTANCE_METRICS = ("l1", "l2", "rms", "cosine", "chi2", "hellinger", "kl", "emd_marginal")


def _kl(a: np.ndarray, b: np.ndarray, smooth: bool) -> float:
    if smooth:
        b = (b + KL_EPS) / (b + KL_EPS).sum()
    nz = a > 0
    if np.any(b[nz] <= 0):
        raise DivergenceError("q has empty bins where p has mass; enable smoothing")
    return float(max(0.0, (a[nz] * np.log(a[nz] / b[nz])).sum()))


# --------------------------------------------------------------------------
# Information measures
# --------------------------------------------------------------------------

def entropy(h) -> float:
    """Shannon entropy in nats (``0 log 0 = 0``)."""
    p = h.bins if isinstance(h, GradHist2D) else np.asarray(h, dtype=np.float64)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def sparsity_curve(h, levels: Sequence[float]) -> list[tuple[float, float, float]]:
    """``(cutoff, s_p, C_h)`` triples: fraction of bins above the cutoff and their mass."""
    p = (h.bins if isinstance(h, GradHist2D) else np.asarray(h, dtype=np.float64)).ravel()
    srt = np.sort(p)
    csum = np.concatenate([[0.0], np.cumsum(srt)])
    total = csum[-1]
    out = []
    for lev in levels:
        if lev < 0:
            raise ValueError("cutoff levels must be >= 0")
        k = np.searchsorted(srt, lev, side="right")
        n_above = p.size - k
        out.append((float(lev), n_above / p.size, float((total - csum[k]) / total)))
    return out


def _signed_log(x):
    return np.sign(x) * np.log1p(np.abs(x))


def component_correlation(h: GradHist2D, scale: Literal["linear", "log"] = "linear") -> float:
    """Pearson correlation of (Gx, Gy) under the histogram weights.

    ``log`` applies ``sign(g) log(1 + |g|)`` to the integer bin coordinates
    first, a guess at what a log-scale correlation means for integer gradients.
    """
    g = BIN_VALUES if scale == "linear" else _signed_log(BIN_VALUES)
    if scale not in ("linear", "log"):
        raise ValueError("scale must be 'linear' or 'log'")
    p = h.bins / h.bins.sum()
    px = p.sum(axis=0)
    py = p.sum(axis=1)
    mx, my = px @ g, py @ g
    vx = px @ (g - mx) ** 2
    vy = py @ (g - my) ** 2
    if vx <= 0 or vy <= 0:
        raise UndefinedCorrelationError("a gradient component has zero variance")
    cov = (g - my) @ p @ (g - mx)
    return float(np.clip(cov / np.sqrt(vx * vy), -1.0, 1.0))


def _horizontal_derivative(img: np.ndarray, order: int) -> np.ndarray:
    out = img
    for _ in range(order):
        out = out[:, 1:] - out[:, :-1]
    return out


def autocorrelation(img, order: int = 0, max_shift: int = 10) -> list[float]:
    """``AC(d, r)`` for ``r = 0..max_shift``: correlation of the order-``d``
    horizontal difference image with itself shifted right by ``r`` pixels."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    f = _horizontal_derivative(as_image(img), order)
    if max_shift < 0 or f.shape[1] - max_shift < 2:
        raise ValueError("image too narrow for the requested shift")
    out = []
    for r in range(max_shift + 1):
        a = f[:, : f.shape[1] - r].ravel()
        b = f[:, r:].ravel()
        sa, sb = a.std(), b.std()
        if sa == 0 or sb == 0:
            raise UndefinedCorrelationError("derivative field is constant")
        out.append(1.0 if r == 0 else float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb)))
    return out


def marginal_to_csv(m: np.ndarray) -> str:
    lines = ["gradient,probability"]
    lines += [f"{int(g)},{p:.10g}" for g, p in zip(BIN_VALUES, m)]
    return "\n".join(lines) + "\n"
