"""8-bit PNG / PPM / PGM reading and writing (Pillow-backed)."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IngestionError


def read_image(path) -> np.ndarray:
    """Load an 8-bit image as float64 [3, h, w] in [0, 1]; grey images are replicated."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}") from exc
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)


def write_image(path, rgb: np.ndarray) -> None:
    """Write a [3, h, w] image in [0, 1]; format follows the suffix (.png / .ppm)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected [3, h, w], got {rgb.shape}")
    Image.fromarray(np.ascontiguousarray(to_uint8(rgb.transpose(1, 2, 0)))).save(Path(path))


def write_heatmap(path, values: np.ndarray) -> None:
    """Min-max normalise a 2-D map to 0..255 and save (PGM or PNG by suffix)."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    scaled = np.zeros_like(values) if hi <= lo else (values - lo) / (hi - lo)
    Image.fromarray(to_uint8(scaled)).save(Path(path))
