"""Synthetic desk-scale datasets and the on-disk PNG + manifest format."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .spectrum import idct2

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


class DatasetError(Exception):
    pass


class MissingImageError(DatasetError, FileNotFoundError):
    pass


class DimensionMismatchError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    height: int = 16
    width: int = 16
    channels: int = 3
    per_class: int = 500
    test_per_class: int = 100
    signal_scale: float = 0.5
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.height, self.width, self.channels) < 1:
            raise ValueError("classes and image dims must be positive")
        if self.per_class < 1 or self.test_per_class < 0:
            raise ValueError("per-class sample counts must be positive")
        if self.noise < 0 or self.signal_scale < 0:
            raise ValueError("noise and signal scale must be non-negative")


def radial_bins(height: int, width: int) -> np.ndarray:
    """Integer radial index ``floor(sqrt(u^2 + v^2))`` of every band."""
    u, v = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.floor(np.sqrt(u * u + v * v)).astype(int)


def power_law_envelope(height: int, width: int, exponent: float = -2.0) -> np.ndarray:
    """Per-band amplitude whose square follows ``k ** exponent`` on radial bin ``k``; DC is 0."""
    k = radial_bins(height, width).astype(float)
    env = np.zeros_like(k)
    env[k > 0] = k[k > 0] ** (exponent / 2.0)
    return env


def power_law_images(n: int, height: int, width: int, channels: int, exponent: float,
                     rng: np.random.Generator, scale: float = 0.3) -> np.ndarray:
    """Random grey-mean images whose expected radial power spectrum is ``k ** exponent``."""
    env = power_law_envelope(height, width, exponent)[None, :, :, None]
    spec = rng.standard_normal((n, height, width, channels)) * env * scale
    spec[:, 0, 0, :] = 0.5 * np.sqrt(height * width)
    return np.clip(idct2(spec), 0.0, 1.0)


def generate_synthetic(spec: SynthSpec = SynthSpec()):
    """Return ``(train_x, train_y, test_x, test_y)`` as float arrays in [0, 1].

    Each class has a fixed random 1/f-shaped signature spectrum; each sample adds
    independent 1/f-shaped spectral noise of scale ``noise``.
    """
    rng = np.random.default_rng(spec.seed)
    shape = (spec.height, spec.width, spec.channels)
    env = power_law_envelope(spec.height, spec.width)[:, :, None]
    signatures = rng.standard_normal((spec.num_classes, *shape)) * env * spec.signal_scale
    signatures[:, 0, 0, :] = 0.5 * np.sqrt(spec.height * spec.width)

    def draw(count):
        y = np.repeat(np.arange(spec.num_classes), count)
        noise = rng.standard_normal((len(y), *shape)) * env * spec.noise
        return np.clip(idct2(signatures[y] + noise), 0.0, 1.0), y

    train_x, train_y = draw(spec.per_class)
    test_x, test_y = draw(spec.test_per_class)
    return train_x, train_y, test_x, test_y


def quantize(x: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid, as stored on disk."""
    return np.round(np.clip(x, 0.0, 1.0) * 255.0) / 255.0


def _save_png(img: np.ndarray, path: Path) -> None:
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB" if arr.shape[2] == 3 else None).save(path)


def _read_png(path: Path, channels: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("L" if channels == 1 else "RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr[:, :, None] if arr.ndim == 2 else arr


def write_dataset(root, splits: dict[str, tuple[np.ndarray, np.ndarray]], num_classes: int) -> Path:
    """Write images as PNG files plus a JSON manifest; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    dims = None
    for split, (x, y) in splits.items():
        (root / split).mkdir(exist_ok=True)
        for i, (img, label) in enumerate(zip(x, y)):
            if dims is None:
                dims = list(img.shape)
            rel = f"{split}/{i:06d}_c{int(label)}.png"
            _save_png(img, root / rel)
            entries.append({"path": rel, "label": int(label), "split": split})
    manifest = {"version": MANIFEST_VERSION, "classes": int(num_classes), "dims": dims,
                "splits": list(splits), "entries": entries}
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise MissingImageError(f"manifest not found: {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest version {manifest.get('version')!r}")
    for key in ("classes", "dims", "entries"):
        if key not in manifest:
            raise DatasetError(f"manifest missing key {key!r}")
    manifest["_root"] = path.parent
    return manifest


def load_dataset(path, split: str | None = None):
    """Load ``(x, y)`` in manifest order, optionally restricted to one split."""
    manifest = read_manifest(path)
    root = manifest["_root"]
    h, w, c = manifest["dims"]
    k = manifest["classes"]
    xs, ys = [], []
    for entry in manifest["entries"]:
        if split is not None and entry.get("split") != split:
            continue
        label = int(entry["label"])
        if not 0 <= label < k:
            raise LabelRangeError(f"label {label} of {entry['path']} outside [0, {k})")
        file = root / entry["path"]
        if not file.exists():
            raise MissingImageError(f"missing image file: {file}")
        img = _read_png(file, c)
        if img.shape != (h, w, c):
            raise DimensionMismatchError(f"{file}: shape {img.shape}, manifest says {(h, w, c)}")
        xs.append(img)
        ys.append(label)
    if not xs:
        return np.zeros((0, h, w, c)), np.zeros(0, dtype=int)
    return np.stack(xs), np.asarray(ys, dtype=int)


def load_image_directory(root, channels: int = 3):
    """Ingest ``root/<class_name>/*.png|jpg`` into ``(x, y, class_names)``; classes sorted by name."""
    root = Path(root)
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DatasetError(f"no class directories under {root}")
    xs, ys, shape = [], [], None
    for label, name in enumerate(classes):
        for file in sorted((root / name).iterdir()):
            if file.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
                continue
            img = _read_png(file, channels)
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise DimensionMismatchError(f"{file}: shape {img.shape}, expected {shape}")
            xs.append(img)
            ys.append(label)
    return np.stack(xs), np.asarray(ys, dtype=int), classes
