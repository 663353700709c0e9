"""Image representation, file I/O, finite-difference operators and degradations.

Images are plain 2D ``float64`` numpy arrays indexed ``[row, col]`` (``y, x``)
with the canonical intensity range [0, 1].  Kernels are small 2D arrays with
nonnegative weights summing to one.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import ndimage, signal

__all__ = [
    "ImageFormatError",
    "DimensionError",
    "GradientField",
    "as_image",
    "load_image",
    "save_image",
    "gradient",
    "divergence",
    "laplacian",
    "convolve",
    "normalize_kernel",
    "gaussian_kernel",
    "add_gaussian_noise",
    "resample",
]

LUMA = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    """Unsupported raster layout or bit depth."""


class DimensionError(ValueError):
    """Array shapes incompatible with the requested operation."""


def as_image(data) -> np.ndarray:
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2D grayscale image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Read an 8-bit PGM/PNG file as a grayscale image in [0, 1].

    Color rasters are converted with the 0.299/0.587/0.114 luma weights.
    """
    from PIL import Image as PILImage

    path = Path(path)
    try:
        pil = PILImage.open(path)
        pil.load()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc

    mode = pil.mode
    if mode in ("L", "P"):
        if mode == "P":
            pil = pil.convert("RGB")
            return _luma(np.asarray(pil, dtype=np.float64))
        return np.asarray(pil, dtype=np.float64) / 255.0
    if mode in ("RGB", "RGBA"):
        return _luma(np.asarray(pil.convert("RGB"), dtype=np.float64))
    if mode == "LA":
        return np.asarray(pil, dtype=np.float64)[..., 0] / 255.0
    raise ImageFormatError(f"{path}: unsupported image mode {mode!r} (8-bit gray or color only)")


def _luma(rgb: np.ndarray) -> np.ndarray:
    return (rgb[..., 0] * LUMA[0] + rgb[..., 1] * LUMA[1] + rgb[..., 2] * LUMA[2]) / 255.0


def save_image(path, img) -> None:
    """Write ``round(clip(img, 0, 1) * 255)`` as 8-bit PGM or PNG (by suffix)."""
    from PIL import Image as PILImage

    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError("only 2D grayscale images can be saved")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else None
    PILImage.fromarray(data, mode="L").save(path, format=fmt)


# --------------------------------------------------------------------------
# Differential operators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GradientField:
    """Forward-difference gradient with masks of the entries that are real differences.

    ``gx`` is masked on the last column and ``gy`` on the last row.
    """

    gx: np.ndarray
    gy: np.ndarray
    valid_x: np.ndarray
    valid_y: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.gx.shape

    @property
    def valid_mask(self) -> np.ndarray:
        """Pixels where both components are valid."""
        return self.valid_x & self.valid_y

    def with_components(self, gx, gy) -> "GradientField":
        gx = np.where(self.valid_x, gx, 0.0)
        gy = np.where(self.valid_y, gy, 0.0)
        return GradientField(gx, gy, self.valid_x, self.valid_y)

    @classmethod
    def from_components(cls, gx, gy) -> "GradientField":
        gx = np.asarray(gx, dtype=np.float64)
        gy = np.asarray(gy, dtype=np.float64)
        if gx.shape != gy.shape or gx.ndim != 2:
            raise DimensionError("gx and gy must be 2D arrays of equal shape")
        vx, vy = _masks(gx.shape)
        return cls(np.where(vx, gx, 0.0), np.where(vy, gy, 0.0), vx, vy)


def _masks(shape):
    h, w = shape
    vx = np.ones((h, w), dtype=bool)
    vx[:, -1] = False
    vy = np.ones((h, w), dtype=bool)
    vy[-1, :] = False
    return vx, vy


def gradient(img) -> GradientField:
    img = as_image(img)
    h, w = img.shape
    if h < 2 or w < 2:
        raise DimensionError(f"gradient needs at least 2x2 pixels, got {img.shape}")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    vx, vy = _masks(img.shape)
    return GradientField(gx, gy, vx, vy)


def divergence(g: GradientField) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of :func:`gradient`.

    ``divergence(gradient(I))`` is the 5-point Laplacian with Neumann borders.
    """
    gx = np.where(g.valid_x, g.gx, 0.0)
    gy = np.where(g.valid_y, g.gy, 0.0)
    div = np.zeros_like(gx)
    div[:, 0] += gx[:, 0]
    div[:, 1:] += gx[:, 1:] - gx[:, :-1]
    div[0, :] += gy[0, :]
    div[1:, :] += gy[1:, :] - gy[:-1, :]
    return div


def laplacian(img) -> np.ndarray:
    return divergence(gradient(img))


# --------------------------------------------------------------------------
# Kernels and convolution
# --------------------------------------------------------------------------

def normalize_kernel(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2:
        raise DimensionError("kernel must be 2D")
    if np.any(k < 0):
        raise ValueError("kernel weights must be nonnegative")
    s = k.sum()
    if s <= 0:
        raise ValueError("kernel has no mass")
    return k / s


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Sampled isotropic Gaussian on a ``(2r+1)^2`` grid, normalized to sum 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def convolve(img, k, mode: Literal["interior", "zero-pad"] = "interior") -> np.ndarray:
    """2D convolution ``img ⊗ k``.

    ``interior`` evaluates only where the kernel fits inside the image and copies
    the input into the margin of kernel half-width; ``zero-pad`` pads with 0.
    """
    img = as_image(img)
    k = np.asarray(k, dtype=np.float64)
    kh, kw = k.shape
    if kh > img.shape[0] or kw > img.shape[1]:
        raise DimensionError(f"kernel {k.shape} larger than image {img.shape}")
    if mode == "zero-pad":
        full = signal.fftconvolve(img, k, mode="full")
        r0, c0 = kh // 2, kw // 2
        return full[r0:r0 + img.shape[0], c0:c0 + img.shape[1]]
    if mode == "interior":
        out = img.copy()
        valid = signal.fftconvolve(img, k, mode="valid")
        r0, c0 = kh // 2, kw // 2
        out[r0:r0 + valid.shape[0], c0:c0 + valid.shape[1]] = valid
        return out
    raise ValueError(f"unknown convolution mode {mode!r}")


# --------------------------------------------------------------------------
# Degradations and resampling
# --------------------------------------------------------------------------

def add_gaussian_noise(img, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise; the result is not clamped."""
    img = as_image(img)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return img + rng.normal(0.0, sigma, size=img.shape)


def resample(img, factor, method: Literal["nearest", "bilinear"] = "bilinear") -> np.ndarray:
    """Resample by a positive rational ``factor`` with pixel-center alignment."""
    img = as_image(img)
    f = Fraction(factor).limit_denominator(1000) if not isinstance(factor, Fraction) else factor
    if f <= 0:
        raise ValueError("factor must be positive")
    h, w = img.shape
    oh, ow = int(round(h * f)), int(round(w * f))
    if oh < 2 or ow < 2:
        raise DimensionError(f"resampled size {oh}x{ow} is below 2x2")
    if f == 1:
        return img.copy()
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    if method == "nearest":
        yi = np.clip(np.floor(ys + 0.5).astype(int), 0, h - 1)
        xi = np.clip(np.floor(xs + 0.5).astype(int), 0, w - 1)
        return img[np.ix_(yi, xi)]
    if method == "bilinear":
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")
    raise ValueError(f"unknown resampling method {method!r}")
