"""Per-source average residuals and spectra for a corpus."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .data import DatasetManifest, center_crop, parallel_map, resize_bilinear
from .errors import IngestionError
from .imageio import read_image, write_heatmap
from .residual import (
    DEFAULT_DENOISER,
    CorpusStats,
    DenoiserSpec,
    accumulate_stats,
    centred_frequencies,
    denoise,
    peak_contrast,
    reduce_stats,
    residual,
)

logger = logging.getLogger(__name__)


@dataclass
class SourceAnalysis:
    stats: CorpusStats
    contrast: float
    skipped: int = 0


@dataclass
class AnalysisResult:
    sources: Dict[str, SourceAnalysis] = field(default_factory=dict)
    skipped: int = 0
    files: List[Path] = field(default_factory=list)


def _residual_of(path: str, denoiser: DenoiserSpec, size: Optional[int]) -> np.ndarray:
    rgb = read_image(path)
    if size is not None:
        rgb = resize_bilinear(center_crop(rgb), size)
    return residual(rgb, denoise(rgb, denoiser, stem=Path(path).stem))


def _safe(path, denoiser, size):
    try:
        return _residual_of(path, denoiser, size)
    except IngestionError as exc:
        logger.warning("skipping %s: %s", path, exc)
        return None


def write_map_csv(path, values: np.ndarray, centred: bool = False) -> None:
    """Rows of (bin_y, bin_x, value); bins are signed frequencies when ``centred``."""
    h, w = values.shape
    ys = centred_frequencies(h) if centred else np.arange(h)
    xs = centred_frequencies(w) if centred else np.arange(w)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["bin_y", "bin_x", "value"])
        for i in range(h):
            for j in range(w):
                wr.writerow([int(ys[i]), int(xs[j]), repr(float(values[i, j]))])


def analyze(
    manifest: DatasetManifest,
    denoiser: DenoiserSpec = DEFAULT_DENOISER,
    out_dir=None,
    size: Optional[int] = None,
    period: int = 4,
    heatmap_format: str = "pgm",
    threads: Optional[int] = None,
) -> AnalysisResult:
    """Mean residual and mean log-spectrum per source, plus comb peak contrast.

    Images are used at native size unless ``size`` is given (center crop and
    resize). Unreadable files are skipped, logged and counted. Per-image
    statistics are combined by a fixed pairwise reduction.
    """
    if heatmap_format not in ("pgm", "png"):
        raise ValueError("heatmap_format must be pgm or png")
    result = AnalysisResult()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for source in manifest.sources:
        paths = [e.path for e in manifest.entries if e.source == source]
        residuals = parallel_map(lambda p: _safe(p, denoiser, size), paths, threads)
        good = [r for r in residuals if r is not None]
        skipped = len(residuals) - len(good)
        result.skipped += skipped
        if not good:
            logger.warning("source %s has no readable images", source)
            continue
        shapes = {r.shape for r in good}
        if len(shapes) > 1:
            raise IngestionError(f"source {source} mixes image sizes {sorted(shapes)}; pass size=")
        stats = reduce_stats([accumulate_stats(CorpusStats(), r) for r in good])
        spectrum = stats.mean_spectrum_channels
        contrast = peak_contrast(spectrum, period) if spectrum.shape[0] % period == 0 and spectrum.shape[1] % period == 0 else float("nan")
        result.sources[source] = SourceAnalysis(stats, contrast, skipped)
        if out is not None:
            mean_res = stats.mean_residual.mean(axis=0)
            for stem, values, centred in (("residual", mean_res, False), ("spectrum", spectrum, True)):
                img = out / f"{source}_{stem}.{heatmap_format}"
                table = out / f"{source}_{stem}.csv"
                write_heatmap(img, values)
                write_map_csv(table, values, centred)
                result.files += [img, table]
    if out is not None:
        summary = out / "summary.csv"
        with open(summary, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "count", "skipped", "peak_contrast"])
            for name, a in result.sources.items():
                w.writerow([name, a.stats.count, a.skipped, repr(a.contrast)])
        result.files.append(summary)
    return result
