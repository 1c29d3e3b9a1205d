"""Orthonormal 2-D DCT-II / IDCT on H x W x C images and low-frequency region geometry.

Images are float arrays shaped ``(H, W, C)``; batches are ``(N, H, W, C)``.
The transform acts on the two spatial axes of each channel independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def check_image(image: np.ndarray) -> np.ndarray:
    """Validate an ``(H, W, C)`` image with finite values in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or min(image.shape) < 1:
        raise ValueError(f"expected an (H, W, C) image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return image


@lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis; row ``u`` holds ``N_u cos(pi (2i+1) u / 2n)``."""
    i = np.arange(n)
    u = i[:, None]
    mat = np.cos(np.pi * (2 * i[None, :] + 1) * u / (2 * n))
    mat *= math.sqrt(2.0 / n)
    mat[0] = math.sqrt(1.0 / n)
    mat.setflags(write=False)
    return mat


def dct2(image: np.ndarray) -> np.ndarray:
    """Per-channel orthonormal DCT-II. Accepts ``(H, W, C)`` or a batch ``(N, H, W, C)``."""
    x = np.asarray(image, dtype=np.float64)
    h, w = x.shape[-3], x.shape[-2]
    return np.einsum("uh,...hwc,vw->...uvc", dct_matrix(h), x, dct_matrix(w), optimize=True)


def idct2(spec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct2`. The result is not clipped."""
    X = np.asarray(spec, dtype=np.float64)
    h, w = X.shape[-3], X.shape[-2]
    return np.einsum("uh,...uvc,vw->...hwc", dct_matrix(h), X, dct_matrix(w), optimize=True)


def dct2_direct(image: np.ndarray) -> np.ndarray:
    """Literal quadruple-sum DCT-II. O(H^2 W^2); use only as a reference on tiny inputs."""
    x = np.asarray(image, dtype=np.float64)
    h, w, c = x.shape
    out = np.zeros_like(x)
    for ch in range(c):
        for u in range(h):
            nu = math.sqrt(1.0 / h) if u == 0 else math.sqrt(2.0 / h)
            for v in range(w):
                nv = math.sqrt(1.0 / w) if v == 0 else math.sqrt(2.0 / w)
                acc = 0.0
                for i in range(h):
                    for j in range(w):
                        acc += (x[i, j, ch]
                                * math.cos(math.pi * (2 * i + 1) * u / (2 * h))
                                * math.cos(math.pi * (2 * j + 1) * v / (2 * w)))
                out[u, v, ch] = nu * nv * acc
    return out


@dataclass(frozen=True)
class LowFreqRegion:
    """Top-left rectangle ``[0, rows) x [0, cols)`` of an ``height x width`` spectrum."""

    height: int
    width: int
    fraction: float
    rows: int
    cols: int

    def __contains__(self, band) -> bool:
        u, v = band
        return 0 <= u < self.rows and 0 <= v < self.cols

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def bands(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.rows) for v in range(self.cols)]


def low_freq_region(height: int, width: int, fraction: float = 0.183) -> LowFreqRegion:
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if height < 1 or width < 1:
        raise ValueError("spectrum dims must be positive")
    side = math.sqrt(fraction)
    rows = min(height, math.ceil(side * height))
    cols = min(width, math.ceil(side * width))
    return LowFreqRegion(height, width, float(fraction), rows, cols)
