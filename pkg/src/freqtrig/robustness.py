"""Image preprocessing operators and the ASR-under-preprocessing harness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .spectrum import dct_matrix
from .surrogate import Classifier, accuracy, attack_success_rate

# Standard JPEG luminance quantisation table (Annex K).
JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _check_window(w: int) -> None:
    if w < 3 or w % 2 == 0:
        raise ValueError(f"window size must be odd and >= 3, got {w}")


def _pad(img: np.ndarray, r: int) -> np.ndarray:
    return np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")


def gaussian_kernel(w: int) -> np.ndarray:
    """1-D normalised Gaussian with sigma = 0.3 * ((w - 1) / 2 - 1) + 0.8."""
    _check_window(w)
    sigma = 0.3 * ((w - 1) * 0.5 - 1) + 0.8
    x = np.arange(w) - (w - 1) / 2
    k = np.exp(-x * x / (2 * sigma * sigma))
    return k / k.sum()


def gaussian_filter(img: np.ndarray, w: int = 3) -> np.ndarray:
    k = gaussian_kernel(w)
    r = w // 2
    p = _pad(np.asarray(img, dtype=np.float64), r)
    h, wd = p.shape[0] - 2 * r, p.shape[1] - 2 * r
    rows = sum(k[i] * p[i:i + h] for i in range(w))
    out = sum(k[j] * rows[:, j:j + wd] for j in range(w))
    return np.clip(out, 0.0, 1.0)


def local_moments(img: np.ndarray, w: int):
    """Local mean and variance over w x w windows with replicate borders."""
    r = w // 2
    win = sliding_window_view(_pad(np.asarray(img, dtype=np.float64), r), (w, w), axis=(0, 1))
    mean = win.mean(axis=(-2, -1))
    var = (win * win).mean(axis=(-2, -1)) - mean * mean
    return mean, np.maximum(var, 0.0)


def wiener_filter(img: np.ndarray, w: int = 3) -> np.ndarray:
    """Per-channel adaptive Wiener filter with noise power estimated as the mean local variance."""
    _check_window(w)
    x = np.asarray(img, dtype=np.float64)
    mean, var = local_moments(x, w)
    noise = var.mean(axis=(0, 1), keepdims=True)
    denom = np.maximum(var, noise)
    gain = np.divide(np.maximum(var - noise, 0.0), denom, out=np.zeros_like(var), where=denom > 0)
    return np.clip(mean + gain * (x - mean), 0.0, 1.0)


def brightness(img: np.ndarray, factor: float = 1.1) -> np.ndarray:
    if factor <= 0:
        raise ValueError("brightness factor must be positive")
    return np.clip(np.asarray(img, dtype=np.float64) * factor, 0.0, 1.0)


def jpeg_table(quality: int) -> np.ndarray:
    """Luminance table scaled for ``quality`` with the usual libjpeg rule."""
    if not (isinstance(quality, (int, np.integer)) and 1 <= quality <= 100):
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((JPEG_LUMA * scale + 50) / 100), 1, 255)


def jpeg_compress(img: np.ndarray, quality: int = 90) -> np.ndarray:
    """Simulated baseline JPEG: 8x8 block DCT, quantise, dequantise, invert (per channel)."""
    q = jpeg_table(quality)
    x = np.asarray(img, dtype=np.float64)
    h, w, c = x.shape
    ph, pw = math.ceil(h / 8) * 8, math.ceil(w / 8) * 8
    p = np.pad(x, ((0, ph - h), (0, pw - w), (0, 0)), mode="edge") * 255.0 - 128.0
    blocks = p.reshape(ph // 8, 8, pw // 8, 8, c)
    d = dct_matrix(8)
    coef = np.einsum("ui,aibjc,vj->aubvc", d, blocks, d, optimize=True)
    qc = q[None, :, None, :, None]
    coef = np.round(coef / qc) * qc
    rec = np.einsum("ui,aubvc,vj->aibjc", d, coef, d, optimize=True).reshape(ph, pw, c)
    return np.clip((rec[:h, :w] + 128.0) / 255.0, 0.0, 1.0)


@dataclass(frozen=True)
class PreprocessOp:
    """One preprocessing operator; ``kind`` in identity, gaussian, wiener, brightness, jpeg."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        checks = {
            "identity": lambda p: None,
            "gaussian": lambda p: _check_window(p.get("w", 3)),
            "wiener": lambda p: _check_window(p.get("w", 3)),
            "brightness": lambda p: brightness(np.zeros((1, 1, 1)), p.get("factor", 1.1)),
            "jpeg": lambda p: jpeg_table(p.get("quality", 90)),
        }
        if self.kind not in checks:
            raise ValueError(f"unknown preprocessing op {self.kind!r}")
        checks[self.kind](self.params)

    @property
    def name(self) -> str:
        p = self.params
        return {
            "identity": "identity",
            "gaussian": f"gaussian(w={p.get('w', 3)})",
            "wiener": f"wiener(w={p.get('w', 3)})",
            "brightness": f"brightness({p.get('factor', 1.1)})",
            "jpeg": f"jpeg(q={p.get('quality', 90)})",
        }[self.kind]

    def __call__(self, img: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "identity":
            return np.asarray(img, dtype=np.float64)
        if self.kind == "gaussian":
            return gaussian_filter(img, p.get("w", 3))
        if self.kind == "wiener":
            return wiener_filter(img, p.get("w", 3))
        if self.kind == "brightness":
            return brightness(img, p.get("factor", 1.1))
        return jpeg_compress(img, p.get("quality", 90))

    def batch(self, images: np.ndarray) -> np.ndarray:
        return np.stack([self(im) for im in images]) if len(images) else np.asarray(images)

    @classmethod
    def parse(cls, text: str) -> "PreprocessOp":
        """Parse ``kind`` or ``kind:value`` such as ``gaussian:3`` or ``jpeg:90``."""
        kind, _, value = text.partition(":")
        key = {"gaussian": "w", "wiener": "w", "brightness": "factor", "jpeg": "quality"}.get(kind)
        if not value or key is None:
            return cls(kind)
        num = float(value) if key == "factor" else int(value)
        return cls(kind, {key: num})


DEFAULT_OPS = (PreprocessOp("gaussian", {"w": 3}), PreprocessOp("wiener", {"w": 3}),
              PreprocessOp("brightness", {"factor": 1.1}), PreprocessOp("jpeg", {"quality": 90}))


def robustness_harness(victim: Classifier, clean_x, clean_y, poison_x, source_y, target: int,
                       ops=DEFAULT_OPS) -> list[dict]:
    """ACC/ASR of ``victim`` on original and preprocessed test images.

    Rows: ``Original``, one per op, then ``Average`` (mean over ops).
    """
    if len(clean_y) == 0 and len(source_y) == 0:
        raise ValueError("empty test set")
    rows = [{"op": "Original", "acc": accuracy(victim, clean_x, clean_y),
             "asr": attack_success_rate(victim, poison_x, source_y, target)}]
    for op in ops:
        rows.append({"op": op.name, "acc": accuracy(victim, op.batch(clean_x), clean_y),
                     "asr": attack_success_rate(victim, op.batch(poison_x), source_y, target)})
    if ops:
        per_op = rows[1:]
        rows.append({"op": "Average", "acc": float(np.mean([r["acc"] for r in per_op])),
                     "asr": float(np.mean([r["asr"] for r in per_op]))})
    return rows
