"""Haze removal by alternating minimization over the latent image and the transmission map.

The energy is

    1/2 |U t + A (1 - t) - I|^2
      + lam/2 sum (T^2 |grad U|^2 + log(b + |grad U|^2))
      + lam*alpha/2 sum sqrt(|grad log t|^2 + eps_tv^2)

with ``t`` confined to ``[t_min, 1]``.  For fixed ``t`` the data term equals
``1/2 sum t^2 (U - J)^2`` with ``J = (I - A(1 - t)) / t``, so the U-step is
GDP diffusion of ``J`` with per-pixel data weight ``t^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from .imagecore import as_image, divergence, gradient
from .prior import PriorBundle, default_prior
from .restore import _sq_grad, diffusion_step
from .spectrum import DivergenceError

__all__ = [
    "HazeModel",
    "DehazeConfig",
    "DehazeResult",
    "estimate_airlight",
    "initial_transmission",
    "dehaze_energy",
    "dehaze",
    "synthesize_haze",
    "count_components",
]

BRIGHT_FRACTION = 0.001


@dataclass(frozen=True)
class HazeModel:
    """Airlight ``A`` and transmission ``t``; ``I = U t + A (1 - t)``."""

    airlight: float
    t: np.ndarray
    t_min: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.airlight <= 1.0:
            raise ValueError("airlight must lie in [0, 1]")
        if not 0.0 < self.t_min <= 1.0:
            raise ValueError("t_min must lie in (0, 1]")
        t = np.asarray(self.t)
        if t.size and (t.min() < self.t_min - 1e-12 or t.max() > 1.0 + 1e-12):
            raise ValueError("transmission outside [t_min, 1]")

    def compose(self, U) -> np.ndarray:
        return as_image(U) * self.t + self.airlight * (1.0 - self.t)

    def invert(self, I) -> np.ndarray:
        """Pointwise minimizer of the data term: ``(I - A(1 - t)) / t``."""
        return (as_image(I) - self.airlight * (1.0 - self.t)) / self.t


@dataclass
class DehazeConfig:
    """``lam`` weights the GDP term, ``lam * alpha`` the log-t TV term.

    ``patch`` is the window of the dark-channel-style initialization and
    ``omega`` the haze fraction removed by it.  Each outer round runs
    ``u_steps`` diffusion steps of size ``dt`` and ``t_steps`` projected
    gradient steps.
    """

    lam: float = 1e-3
    alpha: float = 10.0
    iters: int = 20
    t_min: float = 0.1
    eps_tv: float = 1e-4
    patch: int = 15
    omega: float = 0.95
    dt: float = 0.2
    u_steps: int = 10
    t_steps: int = 10
    max_rejects: int = 10
    t_pr: float | None = None
    b_pr: float | None = None

    def resolved(self, prior: PriorBundle | None = None) -> "DehazeConfig":
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("lam and alpha must be nonnegative")
        if not 0.0 < self.t_min < 1.0:
            raise ValueError("t_min must lie in (0, 1)")
        if self.iters < 0:
            raise ValueError("iters must be nonnegative")
        prior = prior or default_prior()
        t = prior.t_pr if self.t_pr is None else self.t_pr
        b = prior.b_pr if self.b_pr is None else self.b_pr
        return DehazeConfig(**{**self.__dict__, "t_pr": t, "b_pr": b})


@dataclass
class DehazeResult:
    image: np.ndarray
    transmission: np.ndarray
    airlight: float
    energies: list = field(default_factory=list)


def estimate_airlight(img) -> float:
    """Mean of the brightest 0.1% of pixels (at least one pixel)."""
    v = as_image(img).ravel()
    if v.size == 0:
        raise ValueError("empty image")
    k = max(1, int(math.ceil(BRIGHT_FRACTION * v.size)))
    return float(np.partition(v, v.size - k)[v.size - k:].mean())


def initial_transmission(img, airlight: float, patch: int = 15, omega: float = 0.95,
                         t_min: float = 0.1) -> np.ndarray:
    """Coarse map ``1 - omega * minfilter(I) / A`` clipped to ``[t_min, 1]``."""
    I = as_image(img)
    dark = ndimage.minimum_filter(I, size=patch, mode="nearest")
    t = 1.0 - omega * dark / max(airlight, 1e-6)
    return np.clip(t, t_min, 1.0)


def _log_tv(t, eps_tv):
    g = gradient(np.log(t))
    return np.sqrt(_sq_grad(g) + eps_tv * eps_tv), g


def dehaze_energy(U, t, I, A, lam, alpha, t_pr, b_pr, eps_tv=1e-4) -> float:
    r = U * t + A * (1.0 - t) - I
    e = 0.5 * float((r * r).sum())
    if lam:
        v = _sq_grad(gradient(U))
        e += 0.5 * lam * float((t_pr * t_pr * v + np.log(b_pr + v)).sum())
        if alpha:
            e += 0.5 * lam * alpha * float(_log_tv(t, eps_tv)[0].sum())
    return e


def _t_gradient(U, t, I, A, lam, alpha, eps_tv):
    r = U * t + A * (1.0 - t) - I
    g = (U - A) * r
    if lam and alpha:
        mag, gs = _log_tv(t, eps_tv)
        d = divergence(gs.with_components(gs.gx / mag, gs.gy / mag))
        g = g - 0.5 * lam * alpha * d / t
    return g


def _u_step(U, t, I, A, cfg, E, energy):
    """GDP diffusion of ``J`` with data weight ``t^2``; energy-monitored."""
    w = t * t
    J = (I - A * (1.0 - t)) / t
    wmax = cfg.t_pr ** 2 + 1.0 / cfg.b_pr
    n_sub = max(1, math.ceil(cfg.lam * wmax * cfg.dt / 0.25))
    h = cfg.dt / n_sub
    streak = 0
    for _ in range(cfg.u_steps):
        V = U
        for _ in range(n_sub):
            V = diffusion_step(V, J, cfg.lam, h, cfg.t_pr, cfg.b_pr, data_weight=w)
        En = energy(V, t)
        if En > E + 1e-9 * max(1.0, abs(E)):
            streak += 1
            if streak >= cfg.max_rejects:
                raise DivergenceError("dehaze U-step energy increased 10 times in a row")
            h *= 0.5
            continue
        streak = 0
        U, E = V, En
    return U, E


def _t_step(U, t, I, A, cfg, E, energy):
    """Projected gradient descent with backtracking; never raises the energy."""
    h = 1.0
    for _ in range(cfg.t_steps):
        g = _t_gradient(U, t, I, A, cfg.lam, cfg.alpha, cfg.eps_tv)
        for _ in range(40):
            s = np.clip(t - h * g, cfg.t_min, 1.0)
            En = energy(U, s)
            if En <= E:
                break
            h *= 0.5
        else:
            return t, E
        t, E = s, En
        h *= 2.0
    return t, E


def dehaze(img, prior: PriorBundle | None = None, cfg: DehazeConfig | None = None,
           airlight: float | None = None) -> DehazeResult:
    """Alternate a U-step and a t-step for ``cfg.iters`` rounds.

    ``airlight`` defaults to :func:`estimate_airlight`; ``t`` starts from
    :func:`initial_transmission` and ``U`` from the pointwise inversion.
    """
    cfg = (cfg or DehazeConfig()).resolved(prior)
    I = as_image(img)
    A = estimate_airlight(I) if airlight is None else float(airlight)
    t = initial_transmission(I, A, cfg.patch, cfg.omega, cfg.t_min)
    U = (I - A * (1.0 - t)) / t

    def energy(X, s):
        return dehaze_energy(X, s, I, A, cfg.lam, cfg.alpha, cfg.t_pr, cfg.b_pr, cfg.eps_tv)

    E = energy(U, t)
    res = DehazeResult(U, t, A, [E])
    for _ in range(cfg.iters):
        if cfg.lam:
            U, E = _u_step(U, t, I, A, cfg, E, energy)
        t, E = _t_step(U, t, I, A, cfg, E, energy)
        res.energies.append(E)
    res.image, res.transmission = U, t
    return res


def synthesize_haze(U0, t0, A0: float) -> np.ndarray:
    """Haze composite ``U0 t0 + A0 (1 - t0)``."""
    return HazeModel(A0, np.asarray(t0, dtype=np.float64), min(float(np.min(t0)), 1.0)).compose(U0)


def count_components(img, threshold: float | None = None) -> int:
    """Connected bright regions (8-connectivity) after Otsu thresholding."""
    img = as_image(img)
    if np.ptp(img) == 0:
        return 0
    thr = threshold_otsu(img) if threshold is None else threshold
    _, n = ndimage.label(img > thr, structure=np.ones((3, 3)))
    return int(n)
