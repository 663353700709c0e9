"""Parametric gradient-distribution models: evaluation, fitting and the closed-form T.

Five log-density families are supported, each in a 1D (marginal) and a 2D
(joint) variant::

    model1    2a(exp(-|g|^b / a) - 1) + c g^2
    model2    -a g^2 - log(b + g^2) + c
    hyperlap  -a |g|^b + c
    laplace   -a |g| + c
    gauss     -a g^2 + c

In 2D, ``|g|^b`` becomes ``|gx|^b + |gy|^b`` and ``g^2`` becomes ``|G|^2``.
Gradient coordinates follow a *domain convention*: ``"unit"`` divides the
integer bin index by 255 (intensity units), ``"bin"`` uses the index itself.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import optimize, special

from .spectrum import BIN_VALUES, GradHist2D, NBINS, entropy as _entropy, sparsity_curve

__all__ = [
    "FAMILIES",
    "ModelParams",
    "FitReport",
    "EstimationError",
    "SingularityError",
    "bin_coordinates",
    "eval_log_pdf",
    "eval_cdf_model",
    "cdf_model_limit",
    "cdf_model_grid",
    "fit",
    "fit_T_closed_form",
    "T_objective",
    "model_pdf_grid",
    "model_entropy",
    "model_sparsity_curve",
]

FAMILIES = ("model1", "model2", "hyperlap", "laplace", "gauss")
Domain = Literal["unit", "bin"]


class EstimationError(ValueError):
    """A parameter could not be estimated (e.g. negative radicand, degenerate data)."""


class SingularityError(ValueError):
    """Model evaluated at a pole."""


@dataclass(frozen=True)
class ModelParams:
    """Tagged parameter set.  ``b`` and ``c`` are unused by some families."""

    family: str
    a: float
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES + ("cdf",):
            raise ValueError(f"unknown family {self.family!r}")
        f, a, b = self.family, self.a, self.b
        if f == "model1" and not (a > 0 and b > 0):
            raise ValueError("model1 requires a > 0, b > 0")
        if f == "model2" and not (a >= 0 and b >= 0):
            raise ValueError("model2 requires a >= 0, b >= 0")
        if f == "hyperlap" and not (a > 0 and 0 < b <= 2):
            raise ValueError("hyperlap requires a > 0, 0 < b <= 2")
        if f == "cdf" and not a > 0:
            raise ValueError("cdf model requires T > 0")

    @classmethod
    def cdf(cls, T: float) -> "ModelParams":
        return cls("cdf", T)

    def as_dict(self) -> dict:
        if self.family == "cdf":
            return {"T": self.a}
        if self.family in ("laplace", "gauss"):
            return {"a": self.a, "c": self.c}
        return {"a": self.a, "b": self.b, "c": self.c}


@dataclass
class FitReport:
    params: ModelParams
    dims: int
    sse: float
    r2: float
    iterations: int
    converged: bool
    domain: str = "bin"
    n_bins: int = 0

    def to_json(self) -> dict:
        return {
            "family": self.params.family,
            "dims": self.dims,
            "params": self.params.as_dict(),
            "sse": self.sse,
            "r2": self.r2,
            "iterations": self.iterations,
            "converged": self.converged,
            "domain_convention": self.domain,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FitReport":
        p = doc["params"]
        params = ModelParams(doc["family"], p["a"], p.get("b", 0.0), p.get("c", 0.0))
        return cls(params, doc["dims"], doc["sse"], doc["r2"], doc.get("iterations", 0),
                   doc.get("converged", True), doc.get("domain_convention", "bin"))


def bin_coordinates(domain: Domain = "unit") -> np.ndarray:
    if domain == "unit":
        return BIN_VALUES / 255.0
    if domain == "bin":
        return BIN_VALUES.copy()
    raise ValueError(f"unknown domain convention {domain!r}")


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def _log_pdf(family: str, a: float, b: float, c: float, gx, gy=None):
    gx = np.asarray(gx, dtype=np.float64)
    if gy is None:
        r2 = gx ** 2
        s = np.abs(gx) ** b if family in ("model1", "hyperlap") else None
        ab = np.abs(gx)
    else:
        gy = np.asarray(gy, dtype=np.float64)
        r2 = gx ** 2 + gy ** 2
        s = (np.abs(gx) ** b + np.abs(gy) ** b) if family in ("model1", "hyperlap") else None
        ab = np.abs(gx) + np.abs(gy)
    if family == "model1":
        return 2.0 * a * np.expm1(-s / a) + c * r2
    if family == "model2":
        return -a * r2 - np.log(b + r2) + c
    if family == "hyperlap":
        return -a * s + c
    if family == "laplace":
        return -a * ab + c
    if family == "gauss":
        return -a * r2 + c
    raise ValueError(f"family {family!r} has no log-density")


def eval_log_pdf(m: ModelParams, g, dims: int = 1) -> np.ndarray | float:
    """Unnormalized log-density of ``m`` at ``g`` (scalar/array in 1D, ``(gx, gy)`` in 2D)."""
    if dims == 1:
        gx, gy = g, None
    elif dims == 2:
        gx, gy = g
    else:
        raise ValueError("dims must be 1 or 2")
    if m.family == "model2" and m.b == 0:
        r2 = np.asarray(gx) ** 2 + (0 if gy is None else np.asarray(gy) ** 2)
        if np.any(r2 == 0):
            raise SingularityError("model2 with b = 0 is singular at g = 0")
    out = _log_pdf(m.family, m.a, m.b, m.c, gx, gy)
    return float(out) if np.ndim(out) == 0 else out


def eval_cdf_model(T: float, g) -> np.ndarray | float:
    """Closed-form cumulative of ``exp(-(T g)^2) / g^2`` with a Heaviside jump at 0::

        C(g) = -exp(-(T g)^2) / g - T sqrt(pi) erf(T g) + H(g)

    At ``g == 0`` the symmetric limit ``(C(0+) + C(0-)) / 2 = 1/2`` is returned.
    The function is not a proper CDF: it is increasing on each half-line and
    satisfies ``C(-g) + C(g) = 1``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    g = np.asarray(g, dtype=np.float64)
    out = np.full(g.shape, 0.5)
    nz = g != 0
    gn = g[nz]
    out[nz] = -np.exp(-(T * gn) ** 2) / gn - T * math.sqrt(math.pi) * special.erf(T * gn) + (gn > 0)
    return float(out) if out.ndim == 0 else out


def cdf_model_limit(T: float) -> float:
    """``C(+inf) = 1 - T sqrt(pi)``."""
    return 1.0 - T * math.sqrt(math.pi)


def cdf_model_grid(T: float, b: float, domain: Domain = "unit", dims: int = 2) -> np.ndarray:
    """Proper CDF of the regularized density ``exp(-(T g)^2) / (b + g^2)`` on the bin grid.

    The 2D version is the product of the two marginal CDFs, mirroring the
    separable CDF model.
    """
    if b <= 0:
        raise ValueError("b must be positive for a normalizable density")
    g = bin_coordinates(domain)
    p = np.exp(-(T * g) ** 2) / (b + g ** 2)
    c1 = np.cumsum(p)
    c1 /= c1[-1]
    return c1 if dims == 1 else np.outer(c1, c1)


# --------------------------------------------------------------------------
# Closed-form T
# --------------------------------------------------------------------------

def _t_terms(m, domain: Domain):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (NBINS,):
        raise ValueError(f"marginal must have {NBINS} bins")
    g = bin_coordinates(domain)
    nz = (m > 0) & (g != 0)
    if nz.sum() < 1:
        raise EstimationError("marginal has no mass off the origin")
    gz = g[nz]
    return gz, np.log(m[nz]) + 2.0 * np.log(np.abs(gz))


def T_objective(T: float, m, domain: Domain = "unit") -> float:
    """``sum (log p + T^2 g^2 + 2 log|g|)^2`` over nonzero bins with ``g != 0``."""
    gz, y = _t_terms(m, domain)
    return float(((y + T * T * gz ** 2) ** 2).sum())


def fit_T_closed_form(m, domain: Domain = "unit") -> float:
    """Minimizer of :func:`T_objective`::

        T = sqrt( -sum((2 log|g| + log p) g^2) / sum(g^4) )

    ``m`` is used as given (no renormalization), so a constant offset in
    ``log p`` shifts the estimate.
    """
    gz, y = _t_terms(m, domain)
    radicand = -(y * gz ** 2).sum() / (gz ** 4).sum()
    if not radicand > 0:
        raise EstimationError(
            f"closed-form T radicand is {radicand:.3g} <= 0; distribution is far from the model family")
    return float(math.sqrt(radicand))


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------

def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _unpack(family: str, theta: np.ndarray) -> tuple[float, float, float]:
    if family == "model1":
        return math.exp(theta[0]), math.exp(theta[1]), theta[2]
    if family == "model2":
        return math.exp(theta[0]), math.exp(theta[1]), theta[2]
    if family == "hyperlap":
        return math.exp(theta[0]), 2.0 * float(_sigmoid(theta[1])), theta[2]
    if family == "laplace":
        return theta[0], 1.0, theta[1]
    if family == "gauss":
        return theta[0], 2.0, theta[1]
    raise ValueError(family)


def _starts(family: str, gscale: float, y: np.ndarray) -> list[np.ndarray]:
    """Five deterministic starting points, decade-scaled around the data scale."""
    ytop = float(y.max())
    span = max(float(y.max() - y.min()), 1.0)
    if family == "model1":
        # a sets the log-depth of the tail plateau (~2a), b the shape.
        return [np.array([math.log(a), math.log(b), -span / gscale ** 2 * k])
                for a, b, k in [(span / 2, 0.5, 0.0), (span / 4, 0.5, 0.0), (span, 0.6, 0.0),
                                (span / 8, 0.4, 0.0), (span / 2, 1.0, 0.01)]]
    if family == "model2":
        out = []
        for bfrac, afrac in [(1e-2, 1.0), (1e-3, 1.0), (1e-1, 0.1), (1e-4, 0.1), (1e-2, 10.0)]:
            b = bfrac * gscale ** 2
            a = afrac / gscale ** 2
            out.append(np.array([math.log(a), math.log(b), ytop + math.log(b)]))
        return out
    if family == "hyperlap":
        return [np.array([math.log(span * k / gscale ** bb), math.log(bb / (2 - bb)), ytop])
                for k, bb in [(0.5, 0.6), (1.0, 0.6), (0.2, 0.5), (0.5, 1.0), (2.0, 0.3)]]
    if family == "laplace":
        return [np.array([span * k / gscale, ytop]) for k in (1.0, 0.1, 10.0, 0.5, 2.0)]
    if family == "gauss":
        return [np.array([span * k / gscale ** 2, ytop]) for k in (1.0, 0.1, 10.0, 0.5, 2.0)]
    raise ValueError(family)


def fit(data, family: str, dims: int = 1, domain: Domain = "bin", max_nfev: int = 4000) -> FitReport:
    """Least-squares fit of a family's log-density to the empirical log-probabilities.

    ``data`` is a 1D marginal (511 bins) for ``dims=1`` or a :class:`GradHist2D`
    (or 511x511 array) for ``dims=2``.  Only bins with positive probability
    enter the objective.  Model 1 has no additive constant (``log p(0) = 0``),
    so it is fitted to the peak-normalized histogram.  Levenberg-Marquardt is run from five deterministic
    starts on a log/logit reparameterization that enforces the sign
    constraints; the best SSE wins.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    g = bin_coordinates(domain)
    if dims == 1:
        p = np.asarray(data, dtype=np.float64)
        if p.shape != (NBINS,):
            raise ValueError("1D fit needs a 511-bin marginal")
        nz = p > 0
        gx, gy = g[nz], None
        y = np.log(p[nz] / p.max()) if family == "model1" else np.log(p[nz])
        gscale = float(np.abs(g[nz]).max()) or 1.0
    elif dims == 2:
        p = data.bins if isinstance(data, GradHist2D) else np.asarray(data, dtype=np.float64)
        nz = p > 0
        vv, uu = np.nonzero(nz)
        gx, gy = g[uu], g[vv]
        y = np.log(p[nz] / p.max()) if family == "model1" else np.log(p[nz])
        gscale = float(max(np.abs(gx).max(), np.abs(gy).max())) or 1.0
    else:
        raise ValueError("dims must be 1 or 2")
    if np.count_nonzero(nz) < 10:
        raise ValueError("histogram needs at least 10 nonzero bins to fit")
    if gscale == 0:
        gscale = 1.0

    def residuals(theta):
        a, b, c = _unpack(family, theta)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = _log_pdf(family, a, b, c, gx, gy) - y
        return np.where(np.isfinite(r), r, 1e6)

    best = None
    for x0 in _starts(family, gscale, y):
        try:
            res = optimize.least_squares(residuals, x0, method="lm", max_nfev=max_nfev,
                                         xtol=1e-12, ftol=1e-12, gtol=1e-12)
        except (ValueError, FloatingPointError, OverflowError):
            continue
        sse = float((res.fun ** 2).sum())
        if not np.isfinite(sse):
            continue
        if best is None or sse < best[0]:
            best = (sse, res)
    if best is None:
        raise EstimationError(f"all starts failed for {family}")
    sse, res = best
    a, b, c = _unpack(family, res.x)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else -math.inf)
    try:
        params = ModelParams(family, float(a), float(b), float(c))
    except ValueError as exc:
        raise EstimationError(f"fit produced invalid parameters: {exc}") from exc
    return FitReport(params, dims, sse, r2, int(res.nfev), bool(res.status > 0),
                     domain=domain, n_bins=int(np.count_nonzero(nz)))


# --------------------------------------------------------------------------
# Model-level information measures
# --------------------------------------------------------------------------

def model_pdf_grid(m: ModelParams, domain: Domain = "bin") -> np.ndarray:
    """2D model density discretized on the 511 x 511 bin grid and renormalized."""
    g = bin_coordinates(domain)
    gy, gx = np.meshgrid(g, g, indexing="ij")
    if m.family == "model2" and m.b == 0:
        raise SingularityError("model2 with b = 0 cannot be discretized at the origin")
    logp = _log_pdf(m.family, m.a, m.b, m.c, gx, gy)
    logp = logp - logp.max()
    p = np.exp(logp)
    s = p.sum()
    if not np.isfinite(s) or s <= 0:
        raise FloatingPointError("model density underflows on the grid")
    return p / s


def model_entropy(m: ModelParams, dims: int = 2, domain: Domain = "bin") -> float:
    """Shannon entropy (nats) of the discretized, renormalized 2D model."""
    if dims != 2:
        raise ValueError("model entropy is defined for the 2D models")
    return _entropy(model_pdf_grid(m, domain))


def model_sparsity_curve(m: ModelParams, levels: Sequence[float], domain: Domain = "bin"):
    return sparsity_curve(model_pdf_grid(m, domain), levels)
