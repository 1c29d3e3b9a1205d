"""Spectral anomaly inspection: averaged spectra and the log-log radial slope detector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import radial_bins
from .spectrum import dct2


def _batch(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or len(x) == 0:
        raise ValueError("expected a non-empty batch of (H, W, C) images")
    return x


def average_spectrum(samples) -> np.ndarray:
    """Mean of ``|dct2(x)|`` over the batch (mean of magnitudes, not magnitude of mean)."""
    return np.abs(dct2(_batch(samples))).mean(axis=0)


@dataclass(frozen=True)
class RadialProfile:
    freqs: np.ndarray       # radial bins 1, 2, ...
    magnitudes: np.ndarray  # mean power per bin, averaged over channels

    def to_text(self) -> str:
        return "".join(f"{f:d} {m:.17g}\n" for f, m in zip(self.freqs, self.magnitudes))


def profile_from_power(power: np.ndarray) -> RadialProfile:
    """Bin an ``(H, W, C)`` mean power spectrum by ``floor(radius)``; bins 1 .. min(H, W) - 1."""
    h, w, _ = power.shape
    k = radial_bins(h, w)
    kmax = min(h, w)
    freqs = np.arange(1, kmax)
    mags = np.empty(len(freqs))
    per_channel = power.mean(axis=2)  # channel average commutes with the within-bin mean
    for i, f in enumerate(freqs):
        mags[i] = per_channel[k == f].mean()
    return RadialProfile(freqs, mags)


def radial_profile(samples) -> RadialProfile:
    x = _batch(samples)
    power = (dct2(x) ** 2).mean(axis=0)
    return profile_from_power(power)


def spectral_slope(profile: RadialProfile) -> float:
    """Least-squares slope of log magnitude against log frequency over positive bins."""
    f = np.asarray(profile.freqs, dtype=float)
    m = np.asarray(profile.magnitudes, dtype=float)
    ok = (m > 0) & (f > 0)
    if ok.sum() < 2:
        raise ValueError("need at least two bins with positive magnitude to fit a slope")
    lx, ly = np.log(f[ok]), np.log(m[ok])
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))


@dataclass(frozen=True)
class Verdict:
    slope: float
    threshold: float
    flagged: bool

    @property
    def label(self) -> str:
        return "anomalous" if self.flagged else "not flagged"


def detect(batch, threshold: float) -> Verdict:
    """Flag a batch whose spectral slope is above ``threshold`` (flatter than natural images)."""
    s = spectral_slope(radial_profile(batch))
    return Verdict(s, float(threshold), bool(s > threshold))


def spectrum_to_uint8(spec: np.ndarray, gain: float = 1.0) -> np.ndarray:
    """Grey-level rendering ``255 * gain * log1p(|X|) / max(log1p(|X|))`` of a channel-averaged spectrum."""
    a = np.log1p(np.abs(np.asarray(spec, dtype=float)))
    if a.ndim == 3:
        a = a.mean(axis=2)
    top = a.max()
    scaled = a / top if top > 0 else a
    return np.clip(np.round(scaled * gain * 255.0), 0, 255).astype(np.uint8)
