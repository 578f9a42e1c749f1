"""Noise residuals and corpus-level residual statistics.

A residual is ``image - denoise(image)``. Averaging residuals (and their
log-magnitude spectra) over many images from one source exposes periodic
generator fingerprints that are invisible in any single residual.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import DimensionError, IngestionError

RESIDUAL_SCALE = 5.0


@dataclass(frozen=True)
class DenoiserSpec:
    """``median:k``, ``gaussian:sigma`` or ``external:DIR``."""

    method: str = "median"
    size: int = 3
    sigma: float = 1.0
    directory: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "DenoiserSpec":
        method, _, arg = text.strip().partition(":")
        method = method.lower()
        if method == "median":
            k = int(arg) if arg else 3
            if k < 1 or k % 2 == 0:
                raise ValueError(f"median window must be odd and positive, got {k}")
            return cls("median", size=k)
        if method == "gaussian":
            sigma = float(arg) if arg else 1.0
            if sigma <= 0:
                raise ValueError("gaussian sigma must be positive")
            return cls("gaussian", sigma=sigma)
        if method == "external":
            if not arg:
                raise ValueError("external denoiser needs a directory: external:DIR")
            return cls("external", directory=arg)
        raise ValueError(f"unknown denoiser {text!r}")

    def __str__(self) -> str:
        if self.method == "median":
            return f"median:{self.size}"
        if self.method == "gaussian":
            return f"gaussian:{self.sigma:g}"
        return f"external:{self.directory}"


DEFAULT_DENOISER = DenoiserSpec()


def gaussian_kernel1d(sigma: float, truncate: float = 4.0) -> np.ndarray:
    """Sampled, normalised Gaussian taps over ``[-r, r]``, ``r = int(truncate*sigma + 0.5)``."""
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def load_external(directory, stem: str) -> np.ndarray:
    from .imageio import read_image

    for ext in (".png", ".ppm", ".pnm"):
        path = Path(directory) / f"{stem}{ext}"
        if path.exists():
            return read_image(path)
    raise IngestionError(f"no precomputed denoised image for stem {stem!r} in {directory}")


def denoise(image: np.ndarray, method: Union[DenoiserSpec, str] = DEFAULT_DENOISER, stem: Optional[str] = None) -> np.ndarray:
    """Denoise each channel of a [3, h, w] image; result clamped to [0, 1].

    Borders use reflection, so constant images are returned unchanged.
    """
    if isinstance(method, str):
        method = DenoiserSpec.parse(method)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise DimensionError(f"denoise expects [c, h, w], got {image.shape}")
    if method.method == "median":
        out = ndimage.median_filter(image, size=(1, method.size, method.size), mode="reflect")
    elif method.method == "gaussian":
        k = gaussian_kernel1d(method.sigma)
        out = ndimage.correlate1d(image, k, axis=1, mode="reflect")
        out = ndimage.correlate1d(out, k, axis=2, mode="reflect")
    else:
        if stem is None:
            raise IngestionError("external denoiser needs the image filename stem")
        out = load_external(method.directory, stem)
        if out.shape != image.shape:
            raise IngestionError(f"external denoised {stem!r} has shape {out.shape}, image {image.shape}")
    return np.clip(out, 0.0, 1.0)


def residual(image: np.ndarray, denoised: np.ndarray) -> np.ndarray:
    image, denoised = np.asarray(image, dtype=np.float64), np.asarray(denoised, dtype=np.float64)
    if image.shape != denoised.shape:
        raise DimensionError(f"residual shape mismatch: {image.shape} vs {denoised.shape}")
    return image - denoised


def scale_residual(res: np.ndarray, factor: float = RESIDUAL_SCALE) -> np.ndarray:
    """Fixed model-input normalisation: multiply, then clamp to [-1, 1]."""
    return np.clip(res * factor, -1.0, 1.0)


def fft2(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unnormalised forward 2-D DFT over the last two axes, as (real, imag)."""
    spec = np.fft.fft2(np.asarray(x, dtype=np.float64), axes=(-2, -1))
    return spec.real.copy(), spec.imag.copy()


def log_spectrum(res: np.ndarray) -> np.ndarray:
    """``log(1 + |DFT|)`` per channel with the zero frequency shifted to the centre."""
    re, im = fft2(res)
    return np.fft.fftshift(np.log1p(np.hypot(re, im)), axes=(-2, -1))


def centred_frequencies(n: int) -> np.ndarray:
    """Signed frequency index of each bin after the centre shift."""
    return np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / n)).astype(int)


@dataclass
class CorpusStats:
    """Running means of residuals and of their centred log-spectra."""

    mean_residual: Optional[np.ndarray] = None
    mean_log_spectrum: Optional[np.ndarray] = None
    count: int = 0

    @property
    def mean_spectrum_channels(self) -> np.ndarray:
        """Channel-averaged log-spectrum map."""
        return self.mean_log_spectrum.mean(axis=0)

    def copy(self) -> "CorpusStats":
        if self.count == 0:
            return CorpusStats()
        return CorpusStats(self.mean_residual.copy(), self.mean_log_spectrum.copy(), self.count)


def accumulate_stats(stats: CorpusStats, res: np.ndarray) -> CorpusStats:
    res = np.asarray(res, dtype=np.float64)
    spec = log_spectrum(res)
    if stats.count == 0:
        return CorpusStats(res.copy(), spec, 1)
    if res.shape != stats.mean_residual.shape:
        raise DimensionError(f"residual {res.shape} does not match corpus {stats.mean_residual.shape}")
    n = stats.count + 1
    return CorpusStats(
        stats.mean_residual + (res - stats.mean_residual) / n,
        stats.mean_log_spectrum + (spec - stats.mean_log_spectrum) / n,
        n,
    )


def merge_stats(a: CorpusStats, b: CorpusStats) -> CorpusStats:
    """Combine two partial corpora; weights by count."""
    if a.count == 0:
        return b.copy()
    if b.count == 0:
        return a.copy()
    n = a.count + b.count
    wa, wb = a.count / n, b.count / n
    return CorpusStats(
        wa * a.mean_residual + wb * b.mean_residual,
        wa * a.mean_log_spectrum + wb * b.mean_log_spectrum,
        n,
    )


def reduce_stats(parts: Sequence[CorpusStats]) -> CorpusStats:
    """Deterministic pairwise tree reduction."""
    parts = list(parts)
    if not parts:
        return CorpusStats()
    while len(parts) > 1:
        nxt = [merge_stats(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def peak_contrast(spectrum: np.ndarray, period: int = 4) -> float:
    """Ratio of the weakest diagonal comb peak to the median off-comb bin.

    ``spectrum`` is a centred [h, w] map. The peaks probed are the four bins
    at (+-h/period, +-w/period); every bin on the comb lattice (multiples of
    h/period, w/period, including DC) is excluded from the background.
    """
    h, w = spectrum.shape
    if h % period or w % period:
        raise DimensionError(f"spectrum {h}x{w} not divisible by period {period}")
    fy, fx = centred_frequencies(h), centred_frequencies(w)
    sy, sx = h // period, w // period
    on_lattice = (fy[:, None] % sy == 0) & (fx[None, :] % sx == 0)
    cy, cx = h // 2, w // 2
    peaks = [spectrum[cy + dy, cx + dx] for dy in (-sy, sy) for dx in (-sx, sx)]
    background = np.median(spectrum[~on_lattice])
    if background <= 0:
        return math.inf
    return float(min(peaks) / background)
