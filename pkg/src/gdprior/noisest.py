"""Noise-level estimation from the CDF-model T via a mixture-of-exponentials calibration."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import optimize

from .imagecore import add_gaussian_noise, as_image
from .prior import estimate_T

__all__ = [
    "Calibration",
    "REFERENCE_CALIBRATION",
    "build_calibration",
    "fit_mixture",
    "predict_sigma",
    "estimate_sigma",
    "default_calibration",
    "load_calibration",
]

log = logging.getLogger(__name__)

# Literature two-term fit, kept only for reference: its T scale does not match
# the closed-form estimator used here, so it is never used for prediction.
REFERENCE_CALIBRATION = {
    "terms": [[772.6, -5321.0], [0.9538, -931.2]],
    "fit_stats": {"sse": 0.2741, "rmse": 0.034, "r2": 0.979},
    "label": "literature reference (not used for prediction)",
}


@dataclass(frozen=True)
class Calibration:
    """``sigma(T) = sum q_i exp(s_i T)`` with ``q_i > 0`` and ``s_i < 0``."""

    terms: tuple
    fit_stats: dict = field(default_factory=dict)
    domain_convention: str = "unit"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.terms:
            raise ValueError("calibration needs at least one term")
        for q, s in self.terms:
            if not (q > 0 and s < 0):
                raise ValueError("calibration terms need q > 0 and s < 0")

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def __call__(self, T):
        return predict_sigma(self, T)

    def to_json(self) -> dict:
        return {"terms": [list(t) for t in self.terms], "n_terms": self.n_terms,
                "fit_stats": self.fit_stats, "domain_convention": self.domain_convention,
                "provenance": self.provenance, "reference": REFERENCE_CALIBRATION}

    @classmethod
    def from_json(cls, doc: dict) -> "Calibration":
        return cls(tuple((float(q), float(s)) for q, s in doc["terms"]),
                   dict(doc.get("fit_stats", {})), doc.get("domain_convention", "unit"),
                   dict(doc.get("provenance", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def predict_sigma(cal: Calibration, T):
    """Mixture value clamped to [0, 1]."""
    T = np.asarray(T, dtype=np.float64)
    out = sum(q * np.exp(s * T) for q, s in cal.terms)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def fit_mixture(T, sigma, n_terms: int = 2) -> Calibration:
    """Least-squares fit of the mixture with ``q = exp(alpha)``, ``s = -exp(beta)``.

    Starts spread the decay rates over a decade around ``1 / mean(T)``.
    """
    T = np.asarray(T, dtype=np.float64)
    y = np.asarray(sigma, dtype=np.float64)
    if T.shape != y.shape or T.size < 2 * n_terms + 1:
        raise ValueError("need more (T, sigma) pairs than parameters")

    def model(theta, t):
        q = np.exp(theta[0::2])
        s = -np.exp(theta[1::2])
        return (q[:, None] * np.exp(s[:, None] * t[None, :])).sum(axis=0)

    def resid(theta):
        with np.errstate(over="ignore", invalid="ignore"):
            r = model(theta, T) - y
        return np.where(np.isfinite(r), r, 1e3)

    tscale = 1.0 / max(float(np.mean(T)), 1e-9)
    ymax = max(float(y.max()), 1e-6)
    best = None
    for spread in (1.0, 3.0, 10.0, 0.3, 30.0):
        rates = tscale * spread ** np.linspace(-1, 1, n_terms)
        x0 = np.empty(2 * n_terms)
        x0[0::2] = math.log(ymax * 2.0)
        x0[1::2] = np.log(rates)
        try:
            res = optimize.least_squares(resid, x0, method="lm", max_nfev=20000,
                                         xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except (ValueError, FloatingPointError):
            continue
        sse = float((res.fun ** 2).sum())
        if np.isfinite(sse) and (best is None or sse < best[0]):
            best = (sse, res.x)
    if best is None:
        raise RuntimeError("mixture fit failed from all starts")
    sse, theta = best
    terms = sorted(zip(np.exp(theta[0::2]).tolist(), (-np.exp(theta[1::2])).tolist()),
                   key=lambda t: t[1])
    sst = float(((y - y.mean()) ** 2).sum())
    stats = {"sse": sse, "rmse": math.sqrt(sse / y.size),
             "r2": 1.0 - sse / sst if sst > 0 else float("nan"), "n_points": int(y.size)}
    return Calibration(tuple((float(q), float(s)) for q, s in terms), stats)


def build_calibration(images, sigmas, n_terms: int = 2, seed: int = 0,
                      provenance: dict | None = None) -> Calibration:
    """Add noise of each level to each image, measure T and fit the mixture.

    Noise draws are seeded with ``seed + 1000 * image_index + level_index``.
    """
    images = [as_image(im) for im in images]
    sigmas = [float(s) for s in sigmas]
    if len(images) < 3:
        raise ValueError("need at least 3 images")
    if len(sigmas) < 5:
        raise ValueError("need at least 5 noise levels")
    Ts, ys = [], []
    for i, im in enumerate(images):
        row = []
        for j, s in enumerate(sigmas):
            row.append(estimate_T(add_gaussian_noise(im, s, seed + 1000 * i + j)))
            Ts.append(row[-1])
            ys.append(s)
        order = np.argsort(sigmas)
        if np.any(np.diff(np.asarray(row)[order]) > 0):
            log.warning("calibration quality: T is not monotone in sigma for image %d", i)
    cal = fit_mixture(Ts, ys, n_terms)
    prov = {"images": len(images), "sigmas": sigmas, "seed": seed}
    prov.update(provenance or {})
    return Calibration(cal.terms, cal.fit_stats, "unit", prov)


def load_calibration(path=None) -> Calibration:
    if path is None:
        return default_calibration()
    return Calibration.from_json(json.loads(Path(path).read_text()))


_DEFAULT: Calibration | None = None


def default_calibration() -> Calibration:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("gdprior.data").joinpath("default_calibration.json").read_text()
        _DEFAULT = Calibration.from_json(json.loads(text))
    return _DEFAULT


def estimate_sigma(img, cal: Calibration | None = None) -> float:
    """Noise standard deviation (intensity units) predicted from the image's T."""
    cal = cal or default_calibration()
    return predict_sigma(cal, estimate_T(img, cal.domain_convention))
