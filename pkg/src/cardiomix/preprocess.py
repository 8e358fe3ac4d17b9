"""Gaussian denoising and bilinear resizing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .imgcore import Box, Dataset, Example, Image


@dataclass(frozen=True)
class PreprocessConfig:
    gaussian_sigma: float = 1.0
    kernel_radius: int = 2
    target_height: int = 100
    target_width: int = 100

    def validate(self):
        if not self.gaussian_sigma > 0:
            raise UsageError("gaussian_sigma must be > 0")
        if self.kernel_radius < 0:
            raise UsageError("kernel_radius must be >= 0")
        if self.target_height < 1 or self.target_width < 1:
            raise UsageError("target size must be >= 1")


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(t**2) / (2.0 * sigma**2))
    return k / k.sum()


def _convolve_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = (len(kernel) - 1) // 2
    if r == 0:
        return a.copy()
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    padded = np.pad(a, pad, mode="edge")
    n = a.shape[axis]
    out = np.zeros_like(a)
    for i, weight in enumerate(kernel):
        out += weight * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def blur_array(a: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    """Separable blur of an (H, W, ...) array with edge replication."""
    k = gaussian_kernel(sigma, radius)
    return _convolve_axis(_convolve_axis(a, k, 0), k, 1)


def gaussian_blur(img: Image, cfg: PreprocessConfig) -> Image:
    cfg.validate()
    out = blur_array(img.data, cfg.gaussian_sigma, cfg.kernel_radius)
    return Image(np.clip(out, 0.0, 1.0))


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_array(a: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Center-aligned bilinear resize of an (H, W, ...) array."""
    if target_h < 1 or target_w < 1:
        raise UsageError("resize targets must be >= 1")
    h, w = a.shape[:2]
    if (h, w) == (target_h, target_w):
        return a.copy()
    lo, hi, f = _axis_weights(h, target_h)
    f = f.reshape((-1,) + (1,) * (a.ndim - 1))
    rows = a[lo] * (1 - f) + a[hi] * f
    lo, hi, f = _axis_weights(w, target_w)
    f = f.reshape((1, -1) + (1,) * (a.ndim - 2))
    return rows[:, lo] * (1 - f) + rows[:, hi] * f


def resize(img: Image, target_h: int, target_w: int) -> Image:
    return Image(np.clip(resize_array(img.data, target_h, target_w), 0.0, 1.0))


def _scale_box(box: Box, sy: float, sx: float, h: int, w: int) -> Box:
    return Box(
        max(0, math.floor(box.x0 * sx)),
        max(0, math.floor(box.y0 * sy)),
        min(w, math.ceil(box.x1 * sx)),
        min(h, math.ceil(box.y1 * sy)),
    )


def preprocess(img: Image, cfg: PreprocessConfig) -> Image:
    """Denoise, then resize to the target size."""
    return resize(gaussian_blur(img, cfg), cfg.target_height, cfg.target_width)


def preprocess_dataset(dataset: Dataset, cfg: PreprocessConfig) -> Dataset:
    """Preprocess every image; lesion boxes are rescaled outward to match."""
    out = []
    for ex in dataset.examples:
        img = preprocess(ex.image, cfg)
        box = ex.lesion_box
        if box is not None:
            box = _scale_box(
                box,
                cfg.target_height / ex.image.height,
                cfg.target_width / ex.image.width,
                cfg.target_height,
                cfg.target_width,
            )
        out.append(Example(ex.id, img, ex.label, box))
    return Dataset(tuple(out), dataset.class_names)
