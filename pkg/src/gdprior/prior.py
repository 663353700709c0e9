"""The learned gradient-distribution prior, the naturalness factor and local naturalness maps."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import models
from .imagecore import DimensionError, as_image, gradient, load_image
from .models import EstimationError, FitReport
from .spectrum import (KL_EPS, NBINS, RANGE, GradHist2D, _to_bins, accumulate, distance,
                       entropy, marginal, merge_all)

__all__ = [
    "PriorBundle",
    "LearnReport",
    "NaturalnessMap",
    "REFERENCE_T_PR",
    "REFERENCE_B_PR",
    "average_marginal",
    "estimate_T",
    "learn_prior",
    "load_prior",
    "default_prior",
    "naturalness_factor",
    "naturalness_map",
]

log = logging.getLogger(__name__)

# Literature corpus-level constants, kept as labeled references.  Their
# gradient scale does not match the intensity-unit convention used here.
REFERENCE_T_PR = 0.46
REFERENCE_B_PR = 0.0239
FALLBACK_B_PR = 1e-4
LOW_CONFIDENCE_COUNT = 1000
FORMAT_VERSION = 1


def average_marginal(h: GradHist2D) -> np.ndarray:
    return 0.5 * (marginal(h, "x") + marginal(h, "y"))


def estimate_T(img_or_hist, domain: models.Domain = "unit") -> float:
    """Closed-form CDF-model T of an image (or histogram), from its averaged marginal."""
    h = img_or_hist if isinstance(img_or_hist, GradHist2D) else accumulate(img_or_hist)
    return models.fit_T_closed_form(average_marginal(h), domain)


@dataclass(frozen=True)
class PriorBundle:
    """Immutable prior.

    ``t_pr`` is the closed-form CDF-model T of ``hist`` (denominator of the
    naturalness factor) and ``b_pr`` the Model-2 ``b`` of its marginal, both
    in the bundle's domain convention.  Together they are the constants of the
    soft-constraint regularizer ``T^2 |grad U|^2 + log(b + |grad U|^2)``.
    """

    hist: GradHist2D
    t_pr: float
    b_pr: float = FALLBACK_B_PR
    model_fits: tuple = ()
    entropy: float = float("nan")
    domain_convention: str = "unit"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.t_pr > 0 and self.b_pr > 0):
            raise ValueError("prior constants must be positive")
        if not math.isclose(float(self.hist.bins.sum()), 1.0, rel_tol=1e-9):
            raise ValueError("prior histogram must be normalized")

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return marginal(self.hist, "x"), marginal(self.hist, "y")

    def fit_table(self) -> list[dict]:
        return [f.to_json() for f in self.model_fits]

    def to_json(self, elide_histogram: bool = False) -> dict:
        doc = {
            "version": FORMAT_VERSION,
            "domain_convention": self.domain_convention,
            "t_pr": self.t_pr,
            "b_pr": self.b_pr,
            "reference_constants": {"t_pr": REFERENCE_T_PR, "b_pr": REFERENCE_B_PR,
                                    "label": "literature corpus values, not used"},
            "entropy": self.entropy,
            "model_fits": self.fit_table(),
            "provenance": self.provenance,
        }
        if not elide_histogram:
            doc["histogram"] = self.hist.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PriorBundle":
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported prior file version {doc.get('version')!r}")
        if "histogram" not in doc:
            raise ValueError("prior file has no histogram")
        fits = tuple(FitReport.from_json(d) for d in doc.get("model_fits", []))
        return cls(GradHist2D.from_json(doc["histogram"]), float(doc["t_pr"]),
                   float(doc["b_pr"]), fits, float(doc.get("entropy", float("nan"))),
                   doc.get("domain_convention", "unit"), dict(doc.get("provenance", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def load_prior(path=None) -> PriorBundle:
    """Read a prior file; ``None`` loads the bundled default."""
    if path is None:
        return default_prior()
    return PriorBundle.from_json(json.loads(Path(path).read_text()))


_DEFAULT: PriorBundle | None = None


def default_prior() -> PriorBundle:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("gdprior.data").joinpath("default_prior.json").read_text()
        _DEFAULT = PriorBundle.from_json(json.loads(text))
    return _DEFAULT


# --------------------------------------------------------------------------
# Learning
# --------------------------------------------------------------------------

@dataclass
class LearnReport:
    """Per-image side statistics gathered while learning a prior."""

    names: list = field(default_factory=list)
    entropies: list = field(default_factory=list)
    distances: dict = field(default_factory=dict)
    naturalness: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"images": self.names, "entropy": self.entropies,
                "distance_to_prior": self.distances, "n_f": self.naturalness,
                "skipped": self.skipped}


def _read(item):
    if isinstance(item, (str, Path)):
        return str(item), load_image(item)
    return None, as_image(item)


def learn_prior(corpus, *, fit_models: bool = True, domain: models.Domain = "unit",
                fit_domain: models.Domain = "bin",
                b_pr: float | None = None,
                provenance: dict | None = None, workers: int = 1,
                metrics=("rms", "hellinger", "kl")) -> tuple[PriorBundle, LearnReport]:
    """Aggregate a corpus of images (paths or arrays) into a prior.

    Images are weighted equally.  Unreadable files are skipped with a warning
    and listed in the report.  Raises ``ValueError`` when nothing usable remains
    and :class:`EstimationError` when T cannot be fitted (e.g. constant images).
    ``b_pr`` defaults to the 1D Model-2 ``b`` of the averaged marginal,
    converted to the domain of ``t_pr``.
    """
    items = list(corpus)
    if not items:
        raise ValueError("empty corpus")

    def load(i_item):
        i, item = i_item
        try:
            name, img = _read(item)
            return i, name or f"image-{i}", accumulate(img)
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", item, exc)
            return i, str(item), exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            loaded = list(pool.map(load, enumerate(items)))
    else:
        loaded = [load(x) for x in enumerate(items)]

    report = LearnReport()
    hists = []
    for _, name, h in loaded:
        if isinstance(h, Exception):
            report.skipped.append(name)
        else:
            report.names.append(name)
            hists.append(h)
    if not hists:
        raise ValueError("no readable images in corpus")

    agg = merge_all(hists, weight_by="images")
    t_pr = estimate_T(agg, domain)

    fits: list[FitReport] = []
    if fit_models:
        m = average_marginal(agg)
        for fam in models.FAMILIES:
            for dims, data in ((1, m), (2, agg.bins)):
                try:
                    fits.append(models.fit(data, fam, dims=dims, domain=fit_domain))
                except (ValueError, FloatingPointError) as exc:
                    log.warning("fit %s/%dD failed: %s", fam, dims, exc)

    if b_pr is None:
        b_pr = _model2_b(agg, fits, fit_domain, domain)

    prov = {"images": len(hists), "skipped": len(report.skipped)}
    prov.update(provenance or {})
    prior = PriorBundle(agg, t_pr, b_pr, tuple(fits), entropy(agg), domain, prov)

    report.entropies = [entropy(h) for h in hists]
    report.distances = {mt: [distance(h, agg, mt) for h in hists] for mt in metrics}
    for h in hists:
        try:
            report.naturalness.append(estimate_T(h, domain) / t_pr)
        except EstimationError:
            report.naturalness.append(float("nan"))
    return prior, report


def _model2_b(agg, fits, fit_domain, domain) -> float:
    rep = next((f for f in fits if f.params.family == "model2" and f.dims == 1), None)
    if rep is None:
        try:
            rep = models.fit(average_marginal(agg), "model2", dims=1, domain=fit_domain)
        except (ValueError, FloatingPointError):
            log.warning("model2 fit failed; b_pr falls back to %g", FALLBACK_B_PR)
            return FALLBACK_B_PR
    b = rep.params.b
    if fit_domain == "bin" and domain == "unit":
        b /= 255.0 ** 2
    elif fit_domain == "unit" and domain == "bin":
        b *= 255.0 ** 2
    return b if b > 0 else FALLBACK_B_PR


# --------------------------------------------------------------------------
# Naturalness
# --------------------------------------------------------------------------

def naturalness_factor(img, prior: PriorBundle | None = None) -> float:
    """``N_f = T(img) / t_pr``; 1 means prior-like gradient statistics."""
    prior = prior or default_prior()
    return estimate_T(img, prior.domain_convention) / prior.t_pr


@dataclass
class NaturalnessMap:
    values: np.ndarray
    low_confidence: np.ndarray
    w: int
    stride: int

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.values))


def naturalness_map(img, prior: PriorBundle | None = None, w: int = 16,
                    stride: int | None = None) -> NaturalnessMap:
    """Local KL divergence ``N_w`` between the gradient histogram of each
    ``(2w+1)^2`` window and the prior.

    Windows are kept inside the image (shifted inward near borders).  Centers
    are evaluated every ``stride`` pixels (default ``max(1, w // 2)``) and each
    pixel takes the value of its nearest evaluated center.  Windows with fewer
    than 1000 valid gradient pairs are flagged low-confidence.
    """
    prior = prior or default_prior()
    img = as_image(img)
    h, wd = img.shape
    size = 2 * w + 1
    if w < 1 or size > min(h, wd):
        raise DimensionError(f"window 2w+1={size} does not fit image {img.shape}")
    stride = max(1, w // 2) if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")

    g = gradient(img)
    valid = g.valid_mask
    idx = _to_bins(g.gy) * NBINS + _to_bins(g.gx)
    q = prior.hist.bins.ravel()
    logq = np.log((q + KL_EPS) / (q + KL_EPS).sum())

    def starts(n):
        c = np.arange(0, n, stride)
        return c, np.clip(c - w, 0, n - size)

    cy, sy = starts(h)
    cx, sx = starts(wd)
    vals = np.empty((cy.size, cx.size))
    low = np.empty((cy.size, cx.size), dtype=bool)
    for i, r0 in enumerate(sy):
        for j, c0 in enumerate(sx):
            sel = idx[r0:r0 + size, c0:c0 + size][valid[r0:r0 + size, c0:c0 + size]]
            n = sel.size
            bins, counts = np.unique(sel, return_counts=True)
            p = counts / n
            vals[i, j] = max(0.0, float((p * (np.log(p) - logq[bins])).sum()))
            low[i, j] = n < LOW_CONFIDENCE_COUNT
    ri = np.clip(np.rint(np.arange(h) / stride).astype(int), 0, cy.size - 1)
    ci = np.clip(np.rint(np.arange(wd) / stride).astype(int), 0, cx.size - 1)
    return NaturalnessMap(vals[np.ix_(ri, ci)], low[np.ix_(ri, ci)], w, stride)
