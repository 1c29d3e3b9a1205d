"""Pixel-space stealthiness metrics and spectral residual maps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .spectrum import dct2

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def l2(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.linalg.norm((a - b).ravel()))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]; ``inf`` for identical inputs."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    g = np.exp(-((np.arange(size) - (size - 1) / 2) ** 2) / (2 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows, averaged across channels."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if a.shape[0] < SSIM_WIN or a.shape[1] < SSIM_WIN:
        raise ValueError(f"images must be at least {SSIM_WIN}x{SSIM_WIN} for SSIM")
    win = gaussian_window()
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    vals = []
    for ch in range(a.shape[2]):
        pa = sliding_window_view(a[:, :, ch], win.shape)
        pb = sliding_window_view(b[:, :, ch], win.shape)
        mu_a = np.einsum("ijkl,kl->ij", pa, win)
        mu_b = np.einsum("ijkl,kl->ij", pb, win)
        va = np.einsum("ijkl,kl->ij", pa * pa, win) - mu_a ** 2
        vb = np.einsum("ijkl,kl->ij", pb * pb, win) - mu_b ** 2
        cov = np.einsum("ijkl,kl->ij", pa * pb, win) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


@dataclass(frozen=True)
class StealthReport:
    l2: float
    psnr: float
    ssim: float


def stealth_report(clean, poisoned) -> StealthReport:
    return StealthReport(l2(clean, poisoned), psnr(clean, poisoned), ssim(clean, poisoned))


def spectral_residual(clean, poisoned) -> np.ndarray:
    """Elementwise ``|dct2(poisoned) - dct2(clean)|``."""
    clean, poisoned = _pair(clean, poisoned)
    return np.abs(dct2(poisoned) - dct2(clean))


def residual_to_uint8(residual: np.ndarray, gain: float = 1.0) -> np.ndarray:
    """Grey-level map of a residual: channel mean times ``gain``, clipped to [0, 255]."""
    r = np.asarray(residual, dtype=np.float64)
    if r.ndim == 3:
        r = r.mean(axis=2)
    return np.clip(np.round(r * gain * 255.0), 0, 255).astype(np.uint8)
