"""Frequency triggers: data model, spectral injection, dataset poisoning, closed-form objectives."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .spectrum import LowFreqRegion, idct2, low_freq_region

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class Trigger:
    """Perturbation magnitudes placed on distinct bands of the low-frequency region."""

    bands: tuple[tuple[int, int], ...]
    magnitudes: tuple[float, ...]
    epsilon: float
    region: LowFreqRegion

    def __post_init__(self):
        bands = tuple((int(u), int(v)) for u, v in self.bands)
        mags = tuple(float(m) for m in self.magnitudes)
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "magnitudes", mags)
        if len(bands) != len(mags):
            raise ValueError("bands and magnitudes differ in length")
        if len(set(bands)) != len(bands):
            raise ValueError(f"duplicate bands in {bands}")
        for band in bands:
            if band not in self.region:
                raise ValueError(f"band {band} lies outside the low-frequency region")
        for m in mags:
            if not math.isfinite(m) or abs(m) > self.epsilon:
                raise ValueError(f"magnitude {m} violates |delta| <= {self.epsilon}")

    @property
    def n(self) -> int:
        return len(self.bands)

    def replace(self, bands=None, magnitudes=None) -> "Trigger":
        return Trigger(self.bands if bands is None else bands,
                       self.magnitudes if magnitudes is None else magnitudes,
                       self.epsilon, self.region)

    def spectral_pattern(self, shape) -> np.ndarray:
        """Additive spectrum of shape ``(H, W, C)``; same perturbation on every channel."""
        h, w, _ = shape
        if self.region.height != h or self.region.width != w:
            raise ValueError(f"trigger built for {self.region.height}x{self.region.width}, "
                             f"image is {h}x{w}")
        pat = np.zeros(shape)
        for (u, v), m in zip(self.bands, self.magnitudes):
            if not (0 <= u < h and 0 <= v < w):
                raise ValueError(f"band {(u, v)} outside a {h}x{w} spectrum")
            pat[u, v, :] += m
        return pat

    def to_dict(self, channels: int | None = None) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "bands": [list(b) for b in self.bands],
            "magnitudes": list(self.magnitudes),
            "epsilon": self.epsilon,
            "region_fraction": self.region.fraction,
            "height": self.region.height,
            "width": self.region.width,
            "channels": channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trigger":
        if d.get("version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported trigger manifest version {d.get('version')!r}")
        region = low_freq_region(int(d["height"]), int(d["width"]), float(d["region_fraction"]))
        return cls(tuple(map(tuple, d["bands"])), tuple(d["magnitudes"]), float(d["epsilon"]), region)


def save_trigger(trigger: Trigger, path, channels: int | None = None) -> None:
    Path(path).write_text(json.dumps(trigger.to_dict(channels), indent=2) + "\n")


def load_trigger(path) -> Trigger:
    return Trigger.from_dict(json.loads(Path(path).read_text()))


def inject_unclipped(images: np.ndarray, trigger: Trigger) -> np.ndarray:
    """Add the trigger in the DCT domain and invert, without clipping.

    Works on a single ``(H, W, C)`` image or an ``(N, H, W, C)`` batch. By linearity
    this is ``x + idct2(pattern)``, which keeps a zero trigger exactly neutral.
    """
    x = np.asarray(images, dtype=np.float64)
    return x + idct2(trigger.spectral_pattern(x.shape[-3:]))


def inject(images: np.ndarray, trigger: Trigger) -> np.ndarray:
    return np.clip(inject_unclipped(images, trigger), 0.0, 1.0)


@dataclass(frozen=True)
class PoisonSpec:
    ratio: float = 0.05
    target_label: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"poison ratio must lie in (0, 1], got {self.ratio}")
        if self.target_label < 0:
            raise ValueError("target label must be non-negative")

    def check_classes(self, num_classes: int) -> None:
        if self.target_label >= num_classes:
            raise ValueError(f"target label {self.target_label} out of range for {num_classes} classes")


class PoisonSplit(NamedTuple):
    clean_x: np.ndarray
    clean_y: np.ndarray
    poison_x: np.ndarray
    poison_y: np.ndarray
    source_y: np.ndarray  # labels the poisoned samples had before relabelling
    indices: np.ndarray   # positions of the poisoned samples in the input


def poison_count(n: int, ratio: float) -> int:
    # guard against float noise such as 100 * 0.07 = 7.000000000000001
    return min(n, math.ceil(round(n * ratio, 9)))


def poison_dataset(x: np.ndarray, y: np.ndarray, spec: PoisonSpec, trigger: Trigger,
                   rng: np.random.Generator) -> PoisonSplit:
    """Poison ``ceil(N * r)`` samples drawn uniformly without replacement."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n = len(y)
    if n == 0:
        raise ValueError("cannot poison an empty dataset")
    idx = np.sort(rng.choice(n, size=poison_count(n, spec.ratio), replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    px = inject(x[idx], trigger)
    return PoisonSplit(x[~mask], y[~mask], px, np.full(len(idx), spec.target_label, dtype=y.dtype),
                       y[idx], idx)


def objective_stealth(trigger: Trigger) -> float:
    return float(np.linalg.norm(trigger.magnitudes))


def objective_lowfreq(trigger: Trigger) -> float:
    """Sum over bands of the Euclidean distance to the zero-frequency band."""
    return float(sum(math.hypot(u, v) for u, v in trigger.bands))


def spatial_disparity(clean: np.ndarray, poisoned: np.ndarray) -> float:
    clean = np.asarray(clean, dtype=np.float64)
    poisoned = np.asarray(poisoned, dtype=np.float64)
    if clean.shape != poisoned.shape:
        raise ValueError(f"shape mismatch {clean.shape} vs {poisoned.shape}")
    return float(np.linalg.norm((poisoned - clean).ravel()))
