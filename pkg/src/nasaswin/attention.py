"""Window partitioning, shifted-window masks and the two attention flavours.

Token tensors are [B, H*W, C] in row-major spatial order. Window tensors are
[B, nW, M*M, C] with windows in row-major window order and tokens in
row-major order inside each window.

Standard window attention is the usual multi-head Q/K/V attention with a
learned relative position bias. Noise-aware attention (NASA) has no query or
key projections: the raw score between tokens i and j of a window is the
mean absolute feature difference divided by their grid distance, computed
per head, then mixed across heads by a point-wise (1x1) convolution before
the mask and softmax.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import functional as F
from .errors import ConfigurationError, DimensionError
from .nn import Linear, Module, parameter, trunc_normal
from .tensor import Tensor, as_tensor, matmul, roll, swap_last

MASK_VALUE = -1e9


@dataclass
class WindowGrid:
    tokens: Tensor  # [B, nW, M*M, C]
    height: int
    width: int
    window: int
    shift: int = 0

    @property
    def num_windows(self) -> int:
        return (self.height // self.window) * (self.width // self.window)


def _check_window(H: int, W: int, M: int) -> None:
    if M < 1 or H % M or W % M:
        raise ConfigurationError(f"grid {H}x{W} not divisible by window {M}")


def _batched(x: Tensor, H: int, W: int):
    if x.ndim == 2:
        x = x.reshape((1,) + x.shape)
        squeeze = True
    else:
        squeeze = False
    if x.shape[1] != H * W:
        raise DimensionError(f"{x.shape[1]} tokens do not form a {H}x{W} grid")
    return x, squeeze


def window_partition(x, H: int, W: int, M: int, shift: int = 0) -> WindowGrid:
    x = as_tensor(x)
    _check_window(H, W, M)
    x, _ = _batched(x, H, W)
    B, _, C = x.shape
    t = x.reshape(B, H // M, M, W // M, M, C).transpose(0, 1, 3, 2, 4, 5)
    return WindowGrid(t.reshape(B, (H // M) * (W // M), M * M, C), H, W, M, shift)


def window_reverse(grid: WindowGrid) -> Tensor:
    H, W, M = grid.height, grid.width, grid.window
    B, _, _, C = grid.tokens.shape
    t = grid.tokens.reshape(B, H // M, W // M, M, M, C).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(B, H * W, C)


def cyclic_shift(x, H: int, W: int, s: int, inverse: bool = False) -> Tensor:
    """Toroidal roll of the token grid by (-s, -s), or (+s, +s) when ``inverse``."""
    x = as_tensor(x)
    if s < 0:
        raise ConfigurationError("shift must be non-negative")
    x, squeeze = _batched(x, H, W)
    if s == 0:
        out = x
    else:
        B, _, C = x.shape
        step = s if inverse else -s
        out = roll(x.reshape(B, H, W, C), (step, step), (1, 2)).reshape(B, H * W, C)
    return out.reshape(out.shape[1:]) if squeeze else out


@lru_cache(maxsize=None)
def _shift_mask(H: int, W: int, M: int, s: int) -> np.ndarray:
    _check_window(H, W, M)
    if not 0 <= s < M:
        raise ConfigurationError(f"shift {s} outside [0, {M})")
    nW = (H // M) * (W // M)
    if s == 0:
        return np.zeros((nW, M * M, M * M))
    labels = np.zeros((H, W))
    region = 0
    for rows in (slice(0, H - M), slice(H - M, H - s), slice(H - s, H)):
        for cols in (slice(0, W - M), slice(W - M, W - s), slice(W - s, W)):
            labels[rows, cols] = region
            region += 1
    win = labels.reshape(H // M, M, W // M, M).transpose(0, 2, 1, 3).reshape(nW, M * M)
    diff = win[:, :, None] != win[:, None, :]
    mask = np.where(diff, MASK_VALUE, 0.0)
    mask.setflags(write=False)
    return mask


def build_shift_mask(H: int, W: int, M: int, s: int) -> np.ndarray:
    """Additive [nW, M*M, M*M] mask for the shifted window configuration.

    Region labels follow the 3x3 slice decomposition of the shifted grid;
    pairs from different regions get -1e9, same-region pairs 0.
    """
    return _shift_mask(H, W, M, s)


@lru_cache(maxsize=None)
def relative_position_index(M: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(M), np.arange(M), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (M - 1)
    idx = rel[0] * (2 * M - 1) + rel[1]
    idx.setflags(write=False)
    return idx


def window_positions(M: int) -> np.ndarray:
    """Integer (row, col) of each token in an M x M window, row-major."""
    return np.stack(np.meshgrid(np.arange(M), np.arange(M), indexing="ij"), axis=-1).reshape(-1, 2).astype(np.float64)


def inverse_distance(positions: np.ndarray) -> np.ndarray:
    """1 / ||p_i - p_j||_2 off the diagonal, 0 on it."""
    positions = np.asarray(positions, dtype=np.float64)
    d = np.sqrt(((positions[:, None, :] - positions[None, :, :]) ** 2).sum(-1))
    out = np.zeros_like(d)
    off = d > 0
    out[off] = 1.0 / d[off]
    return out


@lru_cache(maxsize=None)
def _window_inverse_distance(M: int) -> np.ndarray:
    inv = inverse_distance(window_positions(M))
    inv.setflags(write=False)
    return inv


def _split_heads(t: Tensor, heads: int) -> Tensor:
    # [..., N, C] -> [..., heads, N, C/heads]
    *lead, N, C = t.shape
    nd = len(lead)
    t = t.reshape(tuple(lead) + (N, heads, C // heads))
    return t.transpose(tuple(range(nd)) + (nd + 1, nd, nd + 2))


def _merge_heads(t: Tensor) -> Tensor:
    *lead, heads, N, d = t.shape
    nd = len(lead)
    t = t.transpose(tuple(range(nd)) + (nd + 1, nd, nd + 2))
    return t.reshape(tuple(lead) + (N, heads * d))


def _add_mask(scores: Tensor, mask: Optional[np.ndarray]) -> Tensor:
    # scores [B, nW, h, N, N]; mask [nW, N, N]
    if mask is None:
        return scores
    mask = np.asarray(mask)
    if mask.shape != (scores.shape[1],) + scores.shape[-2:]:
        raise DimensionError(f"mask {mask.shape} does not match scores {scores.shape}")
    if not mask.any():
        return scores
    return scores + Tensor(mask[None, :, None])


class WindowAttention(Module):
    """Parameters of standard windowed multi-head self-attention."""

    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator):
        if dim % heads:
            raise ConfigurationError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.heads, self.window = dim, heads, window
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.relative_position_bias = parameter(trunc_normal(rng, ((2 * window - 1) ** 2, heads)))

    def __call__(self, tokens, mask=None) -> Tensor:
        return standard_window_attention(tokens, self, mask)


def standard_window_attention(tokens, params: WindowAttention, mask: Optional[np.ndarray] = None) -> Tensor:
    """Multi-head attention inside each window of ``tokens`` [B, nW, N, C]."""
    tokens = as_tensor(tokens.tokens if isinstance(tokens, WindowGrid) else tokens)
    B, nW, N, C = tokens.shape
    M = params.window
    if C != params.dim or N != M * M:
        raise ConfigurationError(f"window tokens {tokens.shape} do not match dim={params.dim}, window={M}")
    h = params.heads
    qkv = params.qkv(tokens)
    q = _split_heads(qkv[..., :C], h)
    k = _split_heads(qkv[..., C : 2 * C], h)
    v = _split_heads(qkv[..., 2 * C :], h)
    scale = (C // h) ** -0.5
    scores = matmul(q * scale, swap_last(k))
    bias = params.relative_position_bias[relative_position_index(M).reshape(-1)]
    bias = bias.reshape(N, N, h).transpose(2, 0, 1)
    scores = _add_mask(scores + bias, mask)
    out = _merge_heads(matmul(F.softmax(scores, axis=-1), v))
    return params.proj(out)


class NasaParams(Module):
    """Value/output projections plus the point-wise head-mixing conv.

    ``head_mix="cross"`` mixes raw score maps across heads with a full
    [heads, heads] 1x1 conv; ``"per_head"`` restricts it to a per-head
    scale and bias.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, head_mix: str = "cross"):
        if dim % heads:
            raise ConfigurationError(f"dim {dim} not divisible by {heads} heads")
        if head_mix not in ("cross", "per_head"):
            raise ConfigurationError(f"unknown head_mix {head_mix!r}")
        self.dim, self.heads, self.head_mix = dim, heads, head_mix
        self.value = Linear(dim, dim, rng)
        self.mix_weight = parameter(np.eye(heads))
        self.mix_bias = parameter(np.zeros(heads))
        self.proj = Linear(dim, dim, rng)

    def __call__(self, tokens, mask=None) -> Tensor:
        return nasa_attention(tokens, self, mask)


def nasa_attn_matrix(features, positions: Optional[np.ndarray] = None) -> Tensor:
    """Raw noise-aware scores for features [..., N, d].

    ``Attn[i, j] = mean_c |f_ic - f_jc| / ||p_i - p_j||``, zero on the
    diagonal. ``positions`` defaults to the row-major grid of a square
    window with N tokens.
    """
    f = as_tensor(features)
    N = f.shape[-2]
    if positions is None:
        M = int(round(np.sqrt(N)))
        if M * M != N:
            raise DimensionError(f"{N} tokens are not a square window; pass positions")
        inv = _window_inverse_distance(M)
    else:
        positions = np.asarray(positions, dtype=np.float64)
        if positions.shape[0] != N:
            raise DimensionError(f"{positions.shape[0]} positions for {N} tokens")
        inv = inverse_distance(positions)
    lead = f.shape[:-2]
    d = f.shape[-1]
    fi = f.reshape(lead + (N, 1, d))
    fj = f.reshape(lead + (1, N, d))
    ad = (fi - fj).abs().mean(axis=-1)
    return ad * Tensor(inv)


def mix_heads(raw: Tensor, params: NasaParams) -> Tensor:
    """1x1 conv over the head axis of raw [B, nW, heads, N, N] score maps."""
    w = params.mix_weight
    if params.head_mix == "per_head":
        w = w * Tensor(np.eye(params.heads))
    moved = raw.transpose(0, 1, 3, 4, 2)  # heads last
    mixed = matmul(moved, swap_last(w)) + params.mix_bias
    return mixed.transpose(0, 1, 4, 2, 3)


def nasa_attention(tokens, params: NasaParams, mask: Optional[np.ndarray] = None) -> Tensor:
    """Noise-aware attention inside each window of ``tokens`` [B, nW, N, C]."""
    tokens = as_tensor(tokens.tokens if isinstance(tokens, WindowGrid) else tokens)
    B, nW, N, C = tokens.shape
    if C != params.dim:
        raise ConfigurationError(f"window tokens {tokens.shape} do not match dim={params.dim}")
    raw = nasa_attn_matrix(_split_heads(tokens, params.heads))
    scores = _add_mask(mix_heads(raw, params), mask)
    v = _split_heads(params.value(tokens), params.heads)
    out = _merge_heads(matmul(F.softmax(scores, axis=-1), v))
    return params.proj(out)
