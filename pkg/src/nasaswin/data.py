"""Manifests, preprocessing into fused 6-channel inputs, and the synthetic corpus."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import IngestionError
from .fusion import interleave
from .imageio import read_image, write_image
from .residual import DEFAULT_DENOISER, DenoiserSpec, denoise, residual, scale_residual

logger = logging.getLogger(__name__)

GENUINE, GENERATED = 0, 1
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    source: str


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    split: str = "train"
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def sources(self) -> List[str]:
        seen = []
        for e in self.entries:
            if e.source not in seen:
                seen.append(e.source)
        return seen

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)


@dataclass
class ImageRecord:
    rgb: np.ndarray  # [3, h, w] in [0, 1]
    label: int
    source: str
    residual: Optional[np.ndarray] = None
    stem: str = ""


def load_manifest(path, split: Optional[str] = None, check_paths: bool = True) -> DatasetManifest:
    """Read a ``path,label,source[,split]`` CSV; relative paths resolve against its folder.

    With ``split`` given and a ``split`` column present, only matching rows
    are kept.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"manifest {path} not found")
    base = path.parent
    entries: List[ManifestEntry] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestionError("empty manifest")
        header = [h.strip().lower() for h in header]
        if header[:3] != ["path", "label", "source"]:
            raise IngestionError(f"{path}:1: expected header path,label,source, got {','.join(header)}")
        has_split = len(header) > 3 and header[3] == "split"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise IngestionError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            if has_split and split is not None and len(row) > 3 and row[3].strip() != split:
                continue
            raw, label, source = row[0].strip(), row[1].strip(), row[2].strip()
            if label not in ("0", "1"):
                raise IngestionError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
            full = raw if os.path.isabs(raw) else str(base / raw)
            if check_paths and not os.path.exists(full):
                raise IngestionError(f"{path}:{lineno}: file {raw} does not exist")
            entries.append(ManifestEntry(full, int(label), source or "unknown"))
    if not entries:
        raise IngestionError("empty manifest")
    counts = {}
    for e in entries:
        counts[e.path] = counts.get(e.path, 0) + 1
    dupes = sum(c - 1 for c in counts.values())
    if dupes:
        logger.warning("manifest %s lists %d duplicate path(s)", path, dupes)
    return DatasetManifest(entries, split or "train", dupes)


def write_manifest(path, entries: Sequence[ManifestEntry], relative_to=None) -> None:
    base = Path(relative_to) if relative_to else Path(path).parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "label", "source"])
        for e in entries:
            p = Path(e.path)
            try:
                p = p.relative_to(base)
            except ValueError:
                pass
            w.writerow([p.as_posix(), e.label, e.source])


def center_crop_box(h: int, w: int) -> Tuple[int, int, int]:
    """(top, left, side) of the largest centred square."""
    side = min(h, w)
    return (h - side) // 2, (w - side) // 2, side


def center_crop(image: np.ndarray) -> np.ndarray:
    top, left, side = center_crop_box(*image.shape[-2:])
    return image[..., top : top + side, left : left + side]


def resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of [c, s, s] to [c, size, size] with half-pixel sample centres."""
    c, h, w = image.shape
    if (h, w) == (size, size):
        return image.copy()
    ys = np.clip((np.arange(size) + 0.5) * h / size - 0.5, 0, h - 1)
    xs = np.clip((np.arange(size) + 0.5) * w / size - 0.5, 0, w - 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([ndimage.map_coordinates(ch, [yy, xx], order=1, mode="nearest") for ch in image])


def load_record(entry: ManifestEntry) -> ImageRecord:
    return ImageRecord(read_image(entry.path), entry.label, entry.source, stem=Path(entry.path).stem)


def preprocess(
    record: ImageRecord, target: int = 224, denoiser: DenoiserSpec = DEFAULT_DENOISER
) -> np.ndarray:
    """Crop, resize, derive the residual and interleave into a [6, target, target] input.

    RGB is centred to [-1, 1]; the residual is scaled and clamped.
    """
    rgb = np.asarray(record.rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3 or min(rgb.shape[1:]) < 1:
        raise IngestionError(f"bad image shape {rgb.shape}")
    rgb = resize_bilinear(center_crop(rgb), target)
    if denoiser.method == "external":
        clean = denoise(rgb, denoiser, stem=record.stem)
        if clean.shape != rgb.shape:
            clean = resize_bilinear(center_crop(clean), target)
    else:
        clean = denoise(rgb, denoiser)
    res = residual(rgb, clean)
    record.residual = res
    return interleave(2.0 * rgb - 1.0, scale_residual(res))


def worker_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("NASASWIN_THREADS")
    return max(1, int(env)) if env else 1


def parallel_map(fn: Callable, items: Sequence, threads: Optional[int] = None) -> list:
    """Ordered map; results are independent of the worker count."""
    n = worker_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def preprocess_manifest(
    manifest: DatasetManifest,
    target: int,
    denoiser: DenoiserSpec = DEFAULT_DENOISER,
    threads: Optional[int] = None,
) -> np.ndarray:
    def one(entry):
        return preprocess(load_record(entry), target, denoiser)

    return np.stack(parallel_map(one, manifest.entries, threads))


# synthetic corpus

def smooth_image(rng: np.random.Generator, size: int, sigma: float = 2.0) -> np.ndarray:
    """Low-pass random RGB image in roughly [0.15, 0.85]."""
    base = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    tint = ndimage.gaussian_filter(rng.standard_normal((3, size, size)), (0, sigma, sigma), mode="wrap")
    img = base[None] + 0.5 * tint
    img = (img - img.mean()) / (img.std() + 1e-12)
    return np.clip(0.5 + 0.12 * img, 0.0, 1.0)


def grid_pattern(size: int, period: int = 4, amplitude: float = 9 / 255, phase: Tuple[int, int] = (0, 0)) -> np.ndarray:
    """Sparse dot lattice: +amplitude where row and column hit the period."""
    g = np.zeros((size, size))
    g[phase[0] :: period, phase[1] :: period] = amplitude
    return g


def synth_image(
    rng: np.random.Generator,
    size: int,
    generated: bool,
    amplitude: float,
    period: int = 4,
    random_phase: bool = False,
) -> np.ndarray:
    img = smooth_image(rng, size)
    if generated:
        phase = tuple(int(v) for v in rng.integers(0, period, 2)) if random_phase else (0, 0)
        img = img + grid_pattern(size, period, amplitude, phase)[None]
    return np.clip(img, 0.0, 1.0)


def synth(
    out_dir,
    n: int,
    seed: int = 0,
    size: int = 32,
    amplitude: float = 9 / 255,
    period: int = 4,
    splits: Sequence[str] = ("train", "test"),
    random_phase: bool = False,
) -> dict:
    """Write ``n`` images per split (half genuine, half generated) plus one manifest per split.

    Genuine images carry source tag ``nature``; generated ones ``grid``.
    Returns {split: manifest path}.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    written = {}
    for split in splits:
        folder = out_dir / split
        folder.mkdir(parents=True, exist_ok=True)
        entries = []
        for i in range(n):
            generated = i % 2 == 1
            img = synth_image(rng, size, generated, amplitude, period, random_phase)
            name = folder / f"{split}_{i:05d}.png"
            write_image(name, img)
            entries.append(ManifestEntry(str(name), GENERATED if generated else GENUINE, "grid" if generated else "nature"))
        mpath = out_dir / f"{split}.csv"
        write_manifest(mpath, entries)
        written[split] = mpath
    return written
