"""Cross-modality fusion embedding and the channel mask augmentation.

RGB and residual channels are interleaved as (R, N_R, G, N_G, B, N_B); the
embedding convolves each colour pair separately (three groups) and then
mixes the groups with a point-wise linear merge.
"""
from __future__ import annotations

import contextlib
import enum
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import functional as F
from .errors import ConfigurationError, DimensionError
from .nn import Linear, Module, parameter, trunc_normal
from .tensor import Tensor, as_tensor

RGB_CHANNELS = (0, 2, 4)
NOISE_CHANNELS = (1, 3, 5)
PATCH = 4
GROUPS = 3


def interleave(rgb: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Stack [..., 3, h, w] RGB and residual maps as [..., 6, h, w] (R, N_R, G, N_G, B, N_B)."""
    rgb, noise = np.asarray(rgb, dtype=np.float64), np.asarray(noise, dtype=np.float64)
    if rgb.shape != noise.shape:
        raise DimensionError(f"interleave shape mismatch: {rgb.shape} vs {noise.shape}")
    if rgb.ndim < 3 or rgb.shape[-3] != 3:
        raise DimensionError(f"expected [..., 3, h, w], got {rgb.shape}")
    out = np.stack([rgb, noise], axis=-3)  # [..., 3, 2, h, w]
    return out.reshape(rgb.shape[:-3] + (6,) + rgb.shape[-2:])


def split_modalities(fused: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    fused = np.asarray(fused)
    return fused[..., 0::2, :, :], fused[..., 1::2, :, :]


class MaskVariant(enum.Enum):
    NO_MASK = "none"
    MASK_RGB = "rgb"
    MASK_NOISE = "noise"
    RANDOM_CHANNELS = "random"


@dataclass(frozen=True)
class MaskChoice:
    variant: MaskVariant
    subset: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.variant is MaskVariant.RANDOM_CHANNELS:
            s = self.subset
            if not s or len(set(s)) != len(s) or not all(0 <= c < 6 for c in s):
                raise ValueError(f"invalid random channel subset {s}")
        elif self.subset:
            raise ValueError(f"{self.variant} takes no subset")

    @property
    def zeroed(self) -> Tuple[int, ...]:
        if self.variant is MaskVariant.MASK_RGB:
            return RGB_CHANNELS
        if self.variant is MaskVariant.MASK_NOISE:
            return NOISE_CHANNELS
        return tuple(sorted(self.subset))


NO_MASK = MaskChoice(MaskVariant.NO_MASK)
_VARIANTS = list(MaskVariant)


class _MaskState:
    blocked = False
    draws = 0  # total sample_mask calls in this process


_state = _MaskState()


def mask_draw_count() -> int:
    return _state.draws


@contextlib.contextmanager
def mask_sampling_disabled():
    """Within this block ``sample_mask`` raises; evaluation paths run inside it."""
    prev = _state.blocked
    _state.blocked = True
    try:
        yield
    finally:
        _state.blocked = prev


def sample_mask(rng: np.random.Generator, max_subset: int = 3) -> MaskChoice:
    """Draw one of the four mask variants uniformly.

    For random-channel masks the subset size is uniform on 1..max_subset and
    channels are drawn without replacement.
    """
    if _state.blocked:
        raise RuntimeError("channel masks must not be sampled outside training")
    if not 1 <= max_subset <= 6:
        raise ValueError("max_subset must lie in 1..6")
    _state.draws += 1
    variant = _VARIANTS[int(rng.integers(4))]
    if variant is not MaskVariant.RANDOM_CHANNELS:
        return MaskChoice(variant)
    size = int(rng.integers(1, max_subset + 1))
    subset = rng.choice(6, size=size, replace=False)
    return MaskChoice(variant, tuple(int(c) for c in subset))


def apply_mask(fused: np.ndarray, mask: MaskChoice) -> np.ndarray:
    """Zero the channels selected by ``mask`` on a [..., 6, h, w] array (copy)."""
    fused = np.asarray(fused, dtype=np.float64)
    if mask.variant is MaskVariant.NO_MASK:
        return fused.copy()
    out = fused.copy()
    out[..., list(mask.zeroed), :, :] = 0.0
    return out


def group_width(embed_dim: int) -> int:
    return embed_dim // GROUPS if embed_dim % GROUPS == 0 else math.ceil(embed_dim / GROUPS)


class CmfeParams(Module):
    """Per-group 4x4/stride-4 convs (2 -> d_g each) and the 3*d_g -> C merge."""

    def __init__(self, embed_dim: int, rng: np.random.Generator):
        self.embed_dim = embed_dim
        self.group_dim = group_width(embed_dim)
        self.conv_weight = parameter(trunc_normal(rng, (GROUPS * self.group_dim, 2, PATCH, PATCH)))
        self.conv_bias = parameter(np.zeros(GROUPS * self.group_dim))
        self.merge = Linear(GROUPS * self.group_dim, embed_dim, rng)

    def __call__(self, fused) -> Tensor:
        return cmfe_embed(fused, self)


def cmfe_premerge(fused, params: CmfeParams) -> Tensor:
    """Grouped conv output, [b, 3*d_g, h/4, w/4] (or unbatched [3*d_g, h/4, w/4])."""
    fused = as_tensor(fused)
    h, w = fused.shape[-2:]
    if fused.shape[-3] != 6:
        raise DimensionError(f"fused input needs 6 channels, got {fused.shape}")
    if h % PATCH or w % PATCH:
        raise ConfigurationError(f"input {h}x{w} not divisible by patch size {PATCH}")
    return F.conv2d_grouped(fused, params.conv_weight, params.conv_bias, stride=PATCH, groups=GROUPS)


def cmfe_embed(fused, params: CmfeParams) -> Tensor:
    """Patch tokens [(h/4)*(w/4), C] (batched: [b, tokens, C]), row-major over patches."""
    pre = cmfe_premerge(fused, params)
    unbatched = pre.ndim == 3
    if unbatched:
        pre = pre.reshape((1,) + pre.shape)
    b, c, gh, gw = pre.shape
    tokens = pre.reshape(b, c, gh * gw).transpose(0, 2, 1)
    out = params.merge(tokens)
    return out.reshape(out.shape[1:]) if unbatched else out
