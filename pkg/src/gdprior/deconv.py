"""Blind and non-blind deconvolution and zooming with the gradient distribution prior.

The latent image minimizes::

    1/2 |valid(U * K) - I|^2 + lam/2 * sum( T^2 |grad U|^2 + log(b + |grad U|^2) )

where ``valid`` keeps only output pixels whose kernel footprint lies inside
``U`` (no padding).  Blind deconvolution alternates this image step with a
least-squares kernel estimate in the gradient domain, coarse to fine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage, signal

from scipy.sparse.linalg import LinearOperator, cg

from .imagecore import (DimensionError, GradientField, as_image, divergence, gaussian_kernel,
                        gradient)
from .restore import _sq_grad, regularizer_gradient
from .spectrum import DivergenceError

__all__ = [
    "DeconvConfig",
    "DeconvResult",
    "SingularEstimateError",
    "ProjectionError",
    "estimate_kernel",
    "project_kernel",
    "kernel_ncc",
    "recenter_kernel",
    "deconv_energy",
    "nonblind_deconvolve",
    "blind_deconvolve",
    "zoom",
    "degrade",
    "upsample_aligned",
    "ZOOM_LAMBDA",
]


class SingularEstimateError(ValueError):
    """Kernel estimate requested from an all-zero gradient field."""


class ProjectionError(ValueError):
    """A kernel window has no positive entries to project onto the simplex."""


@dataclass(frozen=True)
class DeconvConfig:
    """Settings for deconvolution and zooming.

    ``t_pr``/``b_pr`` default to the bundled prior.  ``inner_iter`` latent
    steps are taken per kernel update.  ``fft_eps`` is relative to the
    largest denominator value.  After the pyramid, the kernel is shifted so its
    center of mass is at the window center (``recenter``) and the latent image
    is re-estimated non-blind with ``final_lam`` for ``final_iter`` steps
    (``final_lam=None`` skips that pass).  Kernel weights below
    ``kernel_threshold`` times the peak are zeroed before that pass.
    """

    kernel_size: int = 9
    lam: float = 5e-4
    dt: float = 1.0
    eps: float = 1e-4
    max_outer: int = 50
    inner_iter: int = 1
    cg_iter: int = 25
    levels: int = 3
    fft_eps: float = 1e-3
    final_lam: float | None = 1e-5
    final_iter: int = 60
    recenter: bool = True
    kernel_threshold: float = 0.1
    t_pr: float | None = None
    b_pr: float | None = None

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and positive")
        if self.lam < 0 or self.dt <= 0 or self.fft_eps < 0:
            raise ValueError("lam, dt and fft_eps must be nonnegative (dt positive)")
        if self.levels < 1 or self.max_outer < 1 or self.inner_iter < 1:
            raise ValueError("levels, max_outer and inner_iter must be >= 1")

    def resolved(self) -> "DeconvConfig":
        if self.t_pr is not None and self.b_pr is not None:
            return self
        from .prior import default_prior

        p = default_prior()
        return replace(self, t_pr=self.t_pr or p.t_pr, b_pr=self.b_pr or p.b_pr)


# --------------------------------------------------------------------------
# Kernel step
# --------------------------------------------------------------------------

def estimate_kernel(gU: GradientField, gI: GradientField, size: int,
                    fft_eps: float = 1e-6, relative: bool = True) -> np.ndarray:
    """Least-squares kernel from gradient fields, solved in the Fourier domain.

    ``K = IFFT( sum_c conj(F gU_c) F gI_c / sum_c |F gU_c|^2 )`` over the two
    components ``c``; the denominator is floored at ``fft_eps`` (times its
    maximum when ``relative``).  The result is the centered ``size x size``
    window of the circular solution, before projection.
    """
    if gU.shape != gI.shape:
        raise DimensionError("gradient fields must have the same shape")
    h, w = gU.shape
    if size % 2 == 0 or size > min(h, w):
        raise DimensionError("kernel size must be odd and fit the image")
    if not (np.any(gU.gx) or np.any(gU.gy)):
        raise SingularEstimateError("latent gradient field is identically zero")
    Fux, Fuy = np.fft.fft2(gU.gx), np.fft.fft2(gU.gy)
    Fix, Fiy = np.fft.fft2(gI.gx), np.fft.fft2(gI.gy)
    num = np.conj(Fux) * Fix + np.conj(Fuy) * Fiy
    den = np.abs(Fux) ** 2 + np.abs(Fuy) ** 2
    floor = fft_eps * den.max() if relative else fft_eps
    nz = den > 0
    Fk = np.zeros_like(num)
    Fk[nz] = num[nz] / np.maximum(den[nz], floor)
    k = np.real(np.fft.ifft2(Fk))
    r = size // 2
    k = np.roll(k, (r, r), axis=(0, 1))
    return k[:size, :size].copy()


def project_kernel(k_raw) -> np.ndarray:
    """Zero the negative weights and renormalize to unit sum."""
    k = np.asarray(k_raw, dtype=np.float64)
    k = np.where(k > 0, k, 0.0)
    s = k.sum()
    if not s > 0:
        raise ProjectionError("kernel has no positive entries")
    return k / s


def recenter_kernel(K, order: int = 1) -> np.ndarray:
    """Shift the kernel so its center of mass sits on the window center.

    Blind estimates are only defined up to a translation traded against the
    latent image; fixing the kernel's centroid removes that ambiguity.  The
    shift is fractional (spline of ``order``; 0 gives an integer shift).
    """
    K = np.asarray(K, dtype=np.float64)
    h, w = K.shape
    yy, xx = np.mgrid[0:h, 0:w]
    s = K.sum()
    dy = h // 2 - (K * yy).sum() / s
    dx = w // 2 - (K * xx).sum() / s
    if order == 0:
        dy, dx = round(dy), round(dx)
    out = ndimage.shift(K, (dy, dx), order=order, mode="constant", cval=0.0)
    return project_kernel(out) if np.any(out > 0) else K


def kernel_ncc(a, b) -> float:
    """Peak normalized cross-correlation of two kernels over all relative shifts.

    Kernels are compared as zero-padded images, so a translated copy scores 1
    (blind estimates are only defined up to a shift of the latent image).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    xc = signal.correlate(a, b, mode="full")
    return float(xc.max() / (na * nb))


def _taper(g: GradientField, margin: int) -> GradientField:
    if margin <= 0:
        return g
    m = np.zeros(g.shape, dtype=bool)
    m[margin:-margin, margin:-margin] = True
    return g.with_components(np.where(m, g.gx, 0.0), np.where(m, g.gy, 0.0))


# --------------------------------------------------------------------------
# Image step
# --------------------------------------------------------------------------

def _forward(U, K):
    return signal.fftconvolve(U, K, mode="valid")


def _adjoint(r, K):
    return signal.fftconvolve(r, K[::-1, ::-1], mode="full")


def _interior(I, K):
    kh, kw = K.shape
    return I[kh // 2: I.shape[0] - (kh - 1 - kh // 2), kw // 2: I.shape[1] - (kw - 1 - kw // 2)]


def deconv_energy(U, I, K, lam, t_pr, b_pr) -> float:
    """Interior data term plus the GDP regularizer."""
    r = _forward(U, K) - _interior(I, K)
    e = 0.5 * float((r * r).sum())
    if lam:
        v = _sq_grad(gradient(U))
        e += 0.5 * lam * float((t_pr * t_pr * v + np.log(b_pr + v)).sum())
    return e


def _deconv_grad(U, Ii, K, lam, t_pr, b_pr):
    g = _adjoint(_forward(U, K) - Ii, K)
    if lam:
        g = g + lam * regularizer_gradient(U, t_pr, b_pr)
    return g


def _mm_solve(U, data, fwd, adj, lam, t, b, cg_iter):
    """One majorize-minimize step of ``1/2|fwd(U) - data|^2 + lam/2 sum phi(|grad U|^2)``.

    ``phi(v) = T^2 v + log(b + v)`` is concave in ``v``, so its tangent at
    the current ``v`` majorizes it; minimizing the resulting weighted quadratic
    (conjugate gradients, warm start) cannot raise the energy.  ``adj`` must be
    the exact adjoint of ``fwd``.
    """
    g0 = gradient(U)
    wgt = t * t + 1.0 / (b + _sq_grad(g0))
    shape = U.shape

    def A(x):
        X = x.reshape(shape)
        out = adj(fwd(X))
        if lam:
            g = gradient(X)
            out = out - lam * divergence(g.with_components(wgt * g.gx, wgt * g.gy))
        return out.ravel()

    op = LinearOperator((U.size, U.size), matvec=A, dtype=np.float64)
    x, _ = cg(op, adj(data).ravel(), x0=U.ravel(), rtol=1e-8, atol=0.0, maxiter=cg_iter)
    return x.reshape(shape)


def _latent_steps(U, I, K, cfg: DeconvConfig, n_steps: int, state: dict) -> np.ndarray:
    """``n_steps`` majorize-minimize updates of the latent image.

    A step that raises the energy (only possible through an inexact inner
    solve) is discarded; ten such steps in a row abort with
    :class:`DivergenceError`.
    """
    Ii = _interior(I, K)
    lam, t, b = cfg.lam, cfg.t_pr, cfg.b_pr
    E = deconv_energy(U, I, K, lam, t, b)
    streak = 0
    for _ in range(n_steps):
        V = _mm_solve(U, Ii, lambda X: _forward(X, K), lambda r: _adjoint(r, K),
                      lam, t, b, cfg.cg_iter)
        En = deconv_energy(V, I, K, lam, t, b)
        if En > E + 1e-9 * max(1.0, abs(E)):
            streak += 1
            if streak >= 10:
                raise DivergenceError(f"latent energy increased {streak} times in a row")
            continue
        streak = 0
        U, E = V, En
    state["energy"] = E
    return U


@dataclass
class DeconvResult:
    image: np.ndarray
    kernel: np.ndarray
    scale_kernels: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    iterations: int = 0
    metadata: dict = field(default_factory=lambda: {"kernel_estimate": "sum over gradient components"})


def nonblind_deconvolve(img, kernel, cfg: DeconvConfig | None = None,
                        init=None) -> DeconvResult:
    """Latent image for a known kernel (no alternation)."""
    cfg = (cfg or DeconvConfig()).resolved()
    I = as_image(img)
    K = project_kernel(kernel)
    U = I.copy() if init is None else as_image(init).copy()
    state: dict = {}
    res = DeconvResult(U, K)
    for it in range(cfg.max_outer):
        prev = U
        U = _latent_steps(U, I, K, cfg, cfg.inner_iter, state)
        res.energies.append(state["energy"])
        res.iterations = it + 1
        if _grad_change(U, prev) <= cfg.eps:
            break
    res.image = U
    return res


def _grad_change(U, prev) -> float:
    g = gradient(U - prev)
    return float(np.sqrt(_sq_grad(g).max()))


def _scale_sizes(shape, ksize, levels):
    """Per-level (image shape, kernel size), finest first."""
    out = []
    for lev in range(levels):
        f = 0.5 ** lev
        hs, ws = max(2, int(round(shape[0] * f))), max(2, int(round(shape[1] * f)))
        k = max(3, int(round(ksize * f)) | 1)
        if k >= min(hs, ws) / 2:
            break
        out.append(((hs, ws), k))
    return out


def _resize_kernel(K, size):
    if K.shape[0] == size:
        return K
    zoom = size / K.shape[0]
    k = ndimage.zoom(K, zoom, order=1, grid_mode=True, mode="grid-constant")
    k = k[:size, :size]
    if k.shape != (size, size):
        k = np.pad(k, ((0, size - k.shape[0]), (0, size - k.shape[1])))
    return project_kernel(np.maximum(k, 0) + 1e-12)


def _resize(img, shape):
    h, w = img.shape
    oh, ow = shape
    if (h, w) == (oh, ow):
        return img.copy()
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def blind_deconvolve(img, prior=None, cfg: DeconvConfig | None = None,
                     kernel=None) -> DeconvResult:
    """Alternating kernel / latent-image estimation over a factor-2 pyramid.

    Passing ``kernel`` fixes the kernel (no alternation), which reduces to
    :func:`nonblind_deconvolve` at the finest scale.
    """
    cfg = cfg or DeconvConfig()
    if prior is not None and (cfg.t_pr is None or cfg.b_pr is None):
        cfg = replace(cfg, t_pr=cfg.t_pr or prior.t_pr, b_pr=cfg.b_pr or prior.b_pr)
    cfg = cfg.resolved()
    I = as_image(img)
    if cfg.kernel_size >= min(I.shape) / 2:
        raise DimensionError("kernel_size must be below half the smallest image dimension")
    if kernel is not None:
        return nonblind_deconvolve(I, kernel, cfg)

    scales = _scale_sizes(I.shape, cfg.kernel_size, cfg.levels)
    U = K = None
    result = DeconvResult(I.copy(), np.zeros((1, 1)))
    for shape, ksize in reversed(scales):
        Is = _resize(I, shape)
        if U is None:
            U = Is.copy()
            K = np.zeros((ksize, ksize))
            K[ksize // 2, ksize // 2] = 1.0
        else:
            U = _resize(U, shape)
            K = _resize_kernel(K, ksize)
        gI = _taper(gradient(Is), ksize // 2 + 1)
        state: dict = {}
        for it in range(cfg.max_outer):
            prev = U
            gU = _taper(gradient(U), ksize // 2 + 1)
            K = project_kernel(estimate_kernel(gU, gI, ksize, cfg.fft_eps))
            U = _latent_steps(U, Is, K, cfg, cfg.inner_iter, state)
            result.energies.append(state["energy"])
            result.iterations += 1
            if _grad_change(U, prev) <= cfg.eps:
                break
        result.scale_kernels.append(K.copy())
    if cfg.kernel_threshold > 0:
        K = project_kernel(np.where(K >= cfg.kernel_threshold * K.max(), K, 0.0))
    if cfg.recenter:
        K = recenter_kernel(K)
    if cfg.final_lam is not None:
        fin = nonblind_deconvolve(I, K, replace(cfg, lam=cfg.final_lam, max_outer=cfg.final_iter),
                                  init=I)
        U = fin.image
        result.energies.extend(fin.energies)
    result.image = U
    result.kernel = K
    return result


# --------------------------------------------------------------------------
# Zooming
# --------------------------------------------------------------------------

# Fine pixels between coarse samples are set by the regularizer alone, so the
# weight is far below the deblurring one (PSNR-calibrated on synthetic images).
ZOOM_LAMBDA = 1e-8


def _offset(factor: int) -> int:
    return (factor - 1) // 2


def _subsample(X, factor):
    o = _offset(factor)
    return X[o::factor, o::factor]


def upsample_aligned(img, factor: int, order: int = 1) -> np.ndarray:
    """Spline upsampling consistent with :func:`zoom`'s sampling grid.

    Coarse pixel ``j`` sits at fine coordinate ``j * factor + (factor - 1) // 2``.
    """
    img = as_image(img)
    h, w = img.shape
    o = _offset(factor)
    ys = (np.arange(h * factor) - o) / factor
    xs = (np.arange(w * factor) - o) / factor
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    if order == 1:
        return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")
    return ndimage.map_coordinates(img, [yy, xx], order=order, mode="reflect")


def _zoom_operator(shape, factor: int, sigma: float):
    """Forward model ``U -> samples of G_sigma * U`` and its exact adjoint.

    Only coarse sample positions whose blur support lies inside the fine grid
    are used, so no boundary extension enters the model.  Returns the
    operator pair and the coarse-grid index slices of the used samples.
    """
    r = int(math.ceil(3.0 * sigma)) if sigma > 0 else 0
    K = gaussian_kernel(sigma, r) if r > 0 else np.ones((1, 1))
    o = _offset(factor)

    def rows(n, m):
        # coarse j maps to fine o + j*factor; keep r <= fine <= n-1-r
        j0 = max(0, -(-(r - o) // factor))
        j1 = min(m - 1, (n - 1 - r - o) // factor)
        return slice(j0, j1 + 1), slice(o + j0 * factor - r, o + j1 * factor - r + 1, factor)

    def build(coarse_shape):
        (cy, vy), (cx, vx) = rows(shape[0], coarse_shape[0]), rows(shape[1], coarse_shape[1])
        vshape = (shape[0] - 2 * r, shape[1] - 2 * r)

        def fwd(X):
            return signal.fftconvolve(X, K, mode="valid")[vy, vx]

        def adj(R):
            full = np.zeros(vshape)
            full[vy, vx] = R
            return signal.fftconvolve(full, K[::-1, ::-1], mode="full")

        return fwd, adj, (cy, cx)

    return build


def degrade(img, factor: int, sigma: float) -> np.ndarray:
    """Forward model of :func:`zoom`: Gaussian blur (reflected borders), then subsample."""
    img = as_image(img)
    blurred = ndimage.gaussian_filter(img, sigma, mode="reflect") if sigma > 0 else img
    return _subsample(blurred, factor)


def zoom(img, factor: int, sigma: float = 1.0, prior=None, cfg: DeconvConfig | None = None,
         lam: float | None = None, n_iter: int = 10) -> np.ndarray:
    """Super-resolve by ``factor`` under the model ``I = subsample(G_sigma * U)``.

    ``U`` starts from bilinear upsampling; the GDP-regularized data residual
    is evaluated at the coarse sample positions whose blur support lies
    inside the fine grid.  Each of the ``n_iter`` steps is a majorize-minimize
    update, so the energy never rises.  ``lam`` defaults to
    :data:`ZOOM_LAMBDA`.  ``factor=1`` with ``sigma=0`` returns the input.
    """
    cfg = cfg or DeconvConfig()
    if prior is not None and (cfg.t_pr is None or cfg.b_pr is None):
        cfg = replace(cfg, t_pr=cfg.t_pr or prior.t_pr, b_pr=cfg.b_pr or prior.b_pr)
    cfg = cfg.resolved()
    I = as_image(img)
    if int(factor) != factor or factor < 1:
        raise ValueError("factor must be a positive integer")
    factor = int(factor)
    lam = ZOOM_LAMBDA if lam is None else lam
    U = upsample_aligned(I, factor) if factor > 1 else I.copy()
    if sigma == 0 and factor == 1:
        return U
    fwd, adj, (cy, cx) = _zoom_operator(U.shape, factor, sigma)(I.shape)
    data = I[cy, cx]
    if data.size == 0:
        raise DimensionError("image too small for the blur support")
    t, b = cfg.t_pr, cfg.b_pr

    def E(X):
        r = fwd(X) - data
        e = 0.5 * float((r * r).sum())
        if lam:
            v = _sq_grad(gradient(X))
            e += 0.5 * lam * float((t * t * v + np.log(b + v)).sum())
        return e

    e = E(U)
    streak = 0
    for _ in range(n_iter):
        V = _mm_solve(U, data, fwd, adj, lam, t, b, cfg.cg_iter)
        en = E(V)
        if en > e + 1e-9 * max(1.0, abs(e)):
            streak += 1
            if streak >= 10:
                raise DivergenceError("zoom energy increased 10 times in a row")
            continue
        streak = 0
        step = _grad_change(V, U)
        U, e = V, en
        if step <= cfg.eps:
            break
    return U
