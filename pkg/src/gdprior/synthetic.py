"""Deterministic synthetic scenes with natural-image-like gradient statistics.

Scenes are layered occluding shapes with smooth shading, mild optical blur and
a weak 1/f texture, which gives the heavy-tailed gradient histograms the
prior machinery expects.  Every generator is a pure function of its seed.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = ["scene", "piecewise_smooth", "corpus", "pink_noise", "low_contrast", "haze_scene",
           "motion_kernel"]


def pink_noise(shape, seed: int, exponent: float = 1.0) -> np.ndarray:
    """Zero-mean, unit-std noise with a ``1/f**exponent`` amplitude spectrum."""
    rng = np.random.default_rng(seed)
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.sqrt(fx ** 2 + fy ** 2)
    f[0, 0] = 1.0
    spec = (rng.normal(size=f.shape) + 1j * rng.normal(size=f.shape)) / f ** exponent
    spec[0, 0] = 0.0
    out = np.fft.irfft2(spec, s=shape)
    return out / out.std()


def piecewise_smooth(shape=(128, 128), seed: int = 0, n_shapes: int = 12,
                     blur: float = 0.7) -> np.ndarray:
    """Occluding ellipses and rectangles with linear shading on a smooth background."""
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 0.5 + 0.15 * (xx / w - 0.5) + 0.1 * (yy / h - 0.5) * rng.uniform(-1, 1)
    for _ in range(n_shapes):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.05, 0.3) * h, rng.uniform(0.05, 0.3) * w
        level = rng.uniform(0.1, 0.9)
        slope_y, slope_x = rng.uniform(-0.3, 0.3, size=2)
        shade = level + slope_y * (yy - cy) / h + slope_x * (xx - cx) / w
        if rng.uniform() < 0.5:
            inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img = np.where(inside, shade, img)
    if blur > 0:
        img = ndimage.gaussian_filter(img, blur, mode="nearest")
    return np.clip(img, 0.0, 1.0)


def scene(shape=(128, 128), seed: int = 0, texture: float = 0.02, blur: float = 0.8,
          n_shapes: int = 16) -> np.ndarray:
    """Piecewise-smooth layout plus a weak pink-noise texture, clipped to [0, 1]."""
    base = piecewise_smooth(shape, seed=seed, n_shapes=n_shapes, blur=blur)
    tex = texture * pink_noise(shape, seed=seed + 7919)
    return np.clip(base + tex, 0.0, 1.0)


def corpus(n: int, shape=(128, 128), seed: int = 0, **kwargs) -> list[np.ndarray]:
    return [scene(shape, seed=seed + 101 * i, **kwargs) for i in range(n)]


def low_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    """Compress intensities about the mean by ``factor`` (< 1 lowers contrast)."""
    m = img.mean()
    return m + factor * (img - m)


def haze_scene(shape=(96, 128), seed: int = 0, airlight: float = 0.85, radius: float = 7.0,
               t_floor: float = 0.2, ground: float = 0.12):
    """Two bright blobs on a dark textured ground, behind a haze column between them.

    Returns ``(U0, t0, A0)``.  The transmission is smooth and lowest midway
    between the blobs, so the hazy composite joins them into one bright region.
    ``ground`` is the mean radiance of the textured background.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    U = ground + 0.03 * pink_noise(shape, seed=seed + 17)
    cy = h / 2 + rng.uniform(-2, 2)
    for cx in (w / 2 - 3 * radius, w / 2 + 3 * radius):
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        U = np.where(d2 <= radius ** 2, 0.75 + 0.02 * rng.normal(), U)
    U = np.clip(ndimage.gaussian_filter(U, 0.7, mode="nearest"), 0.0, 1.0)
    # a strip of sky at the top (scene radiance at the airlight)
    U[: max(2, h // 16)] = airlight
    span = 2.2 * radius
    t = 1.0 - (1.0 - t_floor) * np.exp(-0.5 * ((xx - w / 2) / span) ** 2)
    t = t * (0.9 + 0.1 * yy / h)
    return U, np.clip(t, t_floor * 0.9, 1.0), float(airlight)


def motion_kernel(size: int = 9, angle: float = 30.0, length: float = 7.0) -> np.ndarray:
    """Linear motion blur: a centered segment of ``length`` pixels at ``angle`` degrees.

    The segment is sampled at 50 points and splatted bilinearly, then normalized.
    """
    k = np.zeros((size, size))
    c = size // 2
    a = np.deg2rad(angle)
    for s in np.linspace(-length / 2, length / 2, 50):
        y, x = c + s * np.sin(a), c + s * np.cos(a)
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - y0, x - x0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                k[y0 + dy, x0 + dx] += wy * wx
    return k / k.sum()
