"""The dual-branch NASA-Swin classifier.

Dataflow: fusion embedding stem -> stage 1 (standard blocks) -> over the
stages in ``nasa_span`` the tokens are cloned into a noise branch that runs
NASA blocks alongside the main branch's standard blocks, each branch with its
own patch merging -> channel merge at the end of the span -> remaining
standard stages -> mean pool -> LayerNorm -> linear head.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import functional as F
from .attention import (
    NasaParams,
    WindowAttention,
    build_shift_mask,
    cyclic_shift,
    window_partition,
    window_reverse,
)
from .errors import ConfigurationError, DimensionError
from .fusion import PATCH, CmfeParams, cmfe_embed
from .nn import LayerNorm, Linear, Mlp, Module
from .tensor import Tensor, as_tensor, concat


INIT_SCHEMES = ("fan_in", "trunc_normal")


@dataclass
class ModelConfig:
    stage_depths: Tuple[int, ...] = (1, 1, 1, 1)
    stage_dims: Tuple[int, ...] = (12, 24, 48, 96)
    heads: Tuple[int, ...] = (1, 2, 4, 8)
    window: int = 4
    nasa_span: Optional[Tuple[int, int]] = (2, 3)
    num_classes: int = 2
    input_hw: Tuple[int, int] = (32, 32)
    mlp_ratio: int = 4
    head_mix: str = "cross"
    init: str = "fan_in"

    def __post_init__(self):
        self.stage_depths = tuple(int(v) for v in self.stage_depths)
        self.stage_dims = tuple(int(v) for v in self.stage_dims)
        self.heads = tuple(int(v) for v in self.heads)
        self.input_hw = tuple(int(v) for v in self.input_hw)
        if self.nasa_span is not None:
            self.nasa_span = tuple(int(v) for v in self.nasa_span)
        self.validate()

    def validate(self) -> None:
        if not (len(self.stage_depths) == len(self.stage_dims) == len(self.heads) == 4):
            raise ConfigurationError("stage_depths, stage_dims and heads need 4 entries each")
        for i in range(3):
            if self.stage_dims[i + 1] != 2 * self.stage_dims[i]:
                raise ConfigurationError(f"stage_dims must double per stage, got {self.stage_dims}")
        for dim, h in zip(self.stage_dims, self.heads):
            if h < 1 or dim % h:
                raise ConfigurationError(f"dim {dim} not divisible by {h} heads")
        if any(d < 1 for d in self.stage_depths):
            raise ConfigurationError("every stage needs at least one block")
        h, w = self.input_hw
        if h % 32 or w % 32 or h < 32 or w < 32:
            raise ConfigurationError(f"input_hw {self.input_hw} must be positive multiples of 32")
        if self.nasa_span is not None:
            a, b = self.nasa_span
            if not 1 <= a <= b <= 4:
                raise ConfigurationError(f"nasa_span {self.nasa_span} must be a contiguous range within 1..4")
        if self.window < 1:
            raise ConfigurationError("window must be positive")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be at least 2")
        if self.head_mix not in ("cross", "per_head"):
            raise ConfigurationError(f"unknown head_mix {self.head_mix!r}")
        if self.init not in INIT_SCHEMES:
            raise ConfigurationError(f"unknown init {self.init!r}; expected one of {INIT_SCHEMES}")

    def resolution(self, stage: int) -> Tuple[int, int]:
        """Token grid (H, W) inside 1-based ``stage``."""
        h, w = self.input_hw
        f = PATCH * 2 ** (stage - 1)
        return h // f, w // f

    def in_span(self, stage: int) -> bool:
        return self.nasa_span is not None and self.nasa_span[0] <= stage <= self.nasa_span[1]

    # key=value text form
    def to_dict(self) -> Dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out[f.name] = "none"
            elif isinstance(v, tuple):
                out[f.name] = ",".join(str(x) for x in v)
            else:
                out[f.name] = str(v)
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            raw = str(d[f.name]).strip()
            if f.name == "nasa_span":
                kwargs[f.name] = None if raw.lower() in ("none", "", "off") else tuple(int(x) for x in raw.split(","))
            elif f.name in ("head_mix", "init"):
                kwargs[f.name] = raw
            elif f.name in ("window", "num_classes", "mlp_ratio"):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = tuple(int(x) for x in raw.split(","))
        return cls(**kwargs)

    def to_arrays(self) -> Dict[str, np.ndarray]:
        """Numeric encoding stored alongside parameters in checkpoints."""
        span = (0, 0) if self.nasa_span is None else self.nasa_span
        return {
            "__config__.stage_depths": np.array(self.stage_depths, float),
            "__config__.stage_dims": np.array(self.stage_dims, float),
            "__config__.heads": np.array(self.heads, float),
            "__config__.window": np.array([self.window], float),
            "__config__.nasa_span": np.array(span, float),
            "__config__.num_classes": np.array([self.num_classes], float),
            "__config__.input_hw": np.array(self.input_hw, float),
            "__config__.mlp_ratio": np.array([self.mlp_ratio], float),
            "__config__.head_mix": np.array([1.0 if self.head_mix == "cross" else 0.0]),
            "__config__.init": np.array([float(INIT_SCHEMES.index(self.init))]),
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "ModelConfig":
        def ints(key):
            return tuple(int(v) for v in arrays[f"__config__.{key}"])

        span = ints("nasa_span")
        return cls(
            stage_depths=ints("stage_depths"),
            stage_dims=ints("stage_dims"),
            heads=ints("heads"),
            window=ints("window")[0],
            nasa_span=None if span == (0, 0) else span,
            num_classes=ints("num_classes")[0],
            input_hw=ints("input_hw"),
            mlp_ratio=ints("mlp_ratio")[0],
            head_mix="cross" if arrays["__config__.head_mix"][0] else "per_head",
            init=INIT_SCHEMES[int(arrays.get("__config__.init", [0])[0])],
        )


TOY_CONFIG = ModelConfig()


def rescale_fan_in(module: Module) -> None:
    """Rescale 0.02 truncated-normal weights to std 1/sqrt(fan_in).

    Applies to linear weights ([in, out], fan-in ``in``) and conv kernels
    ([out, in, kh, kw], fan-in ``in*kh*kw``). Head-mixing weights and
    relative position bias tables are left alone.
    """
    for name, p in module.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("mix_weight", "relative_position_bias"):
            continue
        if p.ndim == 2:
            fan_in = p.shape[0]
        elif p.ndim == 4:
            fan_in = int(np.prod(p.shape[1:]))
        else:
            continue
        p.data = p.data / (0.02 * np.sqrt(fan_in))


def effective_window(H: int, W: int, window: int) -> int:
    """Windows shrink to the whole grid once the grid is no larger than one window."""
    if min(H, W) <= window:
        if H != W:
            raise ConfigurationError(f"cannot fit a square window to a {H}x{W} grid")
        return H
    if H % window or W % window:
        raise ConfigurationError(f"grid {H}x{W} not divisible by window {window}")
    return window


class Block(Module):
    """Pre-norm transformer block over (optionally shifted) windows.

    ``kind`` selects standard window attention or NASA.
    """

    def __init__(self, dim, heads, resolution, window, shift, kind, mlp_ratio, rng, head_mix="cross"):
        H, W = resolution
        M = effective_window(H, W, window)
        self.resolution, self.window, self.kind = (H, W), M, kind
        self.shift = shift if M < min(H, W) else 0
        self.norm1 = LayerNorm(dim)
        if kind == "standard":
            self.attn = WindowAttention(dim, heads, M, rng)
        elif kind == "nasa":
            self.attn = NasaParams(dim, heads, rng, head_mix=head_mix)
        else:
            raise ConfigurationError(f"unknown block kind {kind!r}")
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio * dim, rng)

    @property
    def mask(self) -> Optional[np.ndarray]:
        H, W = self.resolution
        return build_shift_mask(H, W, self.window, self.shift) if self.shift else None

    def __call__(self, x: Tensor) -> Tensor:
        H, W = self.resolution
        h = self.norm1(x)
        h = cyclic_shift(h, H, W, self.shift)
        grid = window_partition(h, H, W, self.window, self.shift)
        grid.tokens = self.attn(grid.tokens, self.mask)
        h = cyclic_shift(window_reverse(grid), H, W, self.shift, inverse=True)
        x = x + h
        return x + self.mlp(self.norm2(x))


class PatchMerging(Module):
    """2x2 neighbourhood concat (4C) -> LayerNorm -> linear 4C -> 2C.

    Concat order: top-left, bottom-left, top-right, bottom-right.
    """

    def __init__(self, dim: int, rng: np.random.Generator):
        self.norm = LayerNorm(4 * dim)
        self.reduction = Linear(4 * dim, 2 * dim, rng)

    def __call__(self, x, H: int, W: int) -> Tensor:
        return patch_merging(x, H, W, self)


def patch_merging(x, H: int, W: int, params: PatchMerging) -> Tensor:
    x = as_tensor(x)
    if H % 2 or W % 2:
        raise DimensionError(f"patch merging needs an even grid, got {H}x{W}")
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape((1,) + x.shape)
    B, L, C = x.shape
    if L != H * W:
        raise DimensionError(f"{L} tokens do not form a {H}x{W} grid")
    # [B, H/2, dy, W/2, dx, C] -> order (dx, dy) so dy varies fastest: TL, BL, TR, BR
    g = x.reshape(B, H // 2, 2, W // 2, 2, C).transpose(0, 1, 3, 4, 2, 5)
    g = g.reshape(B, (H // 2) * (W // 2), 4 * C)
    out = params.reduction(params.norm(g))
    return out.reshape(out.shape[1:]) if squeeze else out


class ChannelMerge(Module):
    """concat(main, noise) -> linear 2C -> C -> GELU -> linear C -> C."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.fc1 = Linear(2 * dim, dim, rng)
        self.fc2 = Linear(dim, dim, rng)

    def __call__(self, main, noise) -> Tensor:
        return channel_merge(main, noise, self)


def channel_merge(main, noise, params: ChannelMerge) -> Tensor:
    main, noise = as_tensor(main), as_tensor(noise)
    if main.shape != noise.shape:
        raise DimensionError(f"channel merge shape mismatch: {main.shape} vs {noise.shape}")
    return params.fc2(F.gelu(params.fc1(concat([main, noise], axis=-1))))


class Stage(Module):
    def __init__(self, cfg: ModelConfig, stage: int, kind: str, rng: np.random.Generator):
        i = stage - 1
        dim = cfg.stage_dims[i]
        self.downsample = PatchMerging(cfg.stage_dims[i - 1], rng) if stage > 1 else None
        res = cfg.resolution(stage)
        self.blocks = [
            Block(dim, cfg.heads[i], res, cfg.window, 0 if k % 2 == 0 else cfg.window // 2,
                  kind, cfg.mlp_ratio, rng, cfg.head_mix)
            for k in range(cfg.stage_depths[i])
        ]

    def run_blocks(self, x: Tensor) -> Tensor:
        for blk in self.blocks:
            x = blk(x)
        return x


def _copy_standard_into_nasa(src: Block, dst: Block) -> None:
    dim = src.attn.dim
    for name in ("norm1", "norm2"):
        for pname in ("weight", "bias"):
            getattr(getattr(dst, name), pname).data = getattr(getattr(src, name), pname).data.copy()
    for layer in ("fc1", "fc2"):
        for pname in ("weight", "bias"):
            getattr(getattr(dst.mlp, layer), pname).data = getattr(getattr(src.mlp, layer), pname).data.copy()
    dst.attn.value.weight.data = src.attn.qkv.weight.data[:, 2 * dim :].copy()
    dst.attn.value.bias.data = src.attn.qkv.bias.data[2 * dim :].copy()
    dst.attn.proj.weight.data = src.attn.proj.weight.data.copy()
    dst.attn.proj.bias.data = src.attn.proj.bias.data.copy()


class NasaSwin(Module):
    """Dual-branch classifier; ``nasa_span=None`` gives a plain single-branch model.

    Main-branch parameters are drawn first, so two models built from the same
    seed share identical main-branch weights regardless of ``nasa_span``.
    Noise-branch blocks and patch merging start as copies of the matching
    main-branch weights (NASA's head mixing starts at identity).
    """

    def __init__(self, cfg: ModelConfig = TOY_CONFIG, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.stem = CmfeParams(cfg.stage_dims[0], rng)
        self.stem_norm = LayerNorm(cfg.stage_dims[0])
        self.stages = [Stage(cfg, s, "standard", rng) for s in range(1, 5)]
        self.norm = LayerNorm(cfg.stage_dims[-1])
        self.head = Linear(cfg.stage_dims[-1], cfg.num_classes, rng)
        self.noise_stages: List[Stage] = []
        self.channel_merge = None
        if cfg.nasa_span is not None:
            a, b = cfg.nasa_span
            for s in range(a, b + 1):
                stage = Stage(cfg, s, "nasa", rng)
                main = self.stages[s - 1]
                if s == a:
                    stage.downsample = None  # branch is cloned after the main downsample
                else:
                    stage.downsample.norm.weight.data = main.downsample.norm.weight.data.copy()
                    stage.downsample.norm.bias.data = main.downsample.norm.bias.data.copy()
                    stage.downsample.reduction.weight.data = main.downsample.reduction.weight.data.copy()
                    stage.downsample.reduction.bias.data = main.downsample.reduction.bias.data.copy()
                for src, dst in zip(main.blocks, stage.blocks):
                    _copy_standard_into_nasa(src, dst)
                self.noise_stages.append(stage)
            self.channel_merge = ChannelMerge(cfg.stage_dims[b - 1], rng)
        if cfg.init == "fan_in":
            rescale_fan_in(self)

    def branch_parameter_names(self) -> List[str]:
        return [n for n, _ in self.named_parameters() if n.startswith(("noise_stages.", "channel_merge."))]

    def features(self, fused, use_branch: bool = True, trace: Optional[list] = None) -> Tensor:
        cfg = self.cfg
        x = as_tensor(fused)
        if x.ndim == 3:
            x = x.reshape((1,) + x.shape)
        if tuple(x.shape[-2:]) != cfg.input_hw or x.shape[1] != 6:
            raise ConfigurationError(f"input {x.shape} does not match 6 x {cfg.input_hw}")
        x = self.stem_norm(cmfe_embed(x, self.stem))
        span = cfg.nasa_span if (use_branch and cfg.nasa_span is not None) else None
        noise = None
        for s, stage in enumerate(self.stages, start=1):
            if stage.downsample is not None:
                H, W = cfg.resolution(s - 1)
                x = stage.downsample(x, H, W)
                if noise is not None:
                    noise = self.noise_stages[s - span[0]].downsample(noise, H, W)
            if span is not None and s == span[0]:
                noise = x
            x = stage.run_blocks(x)
            if noise is not None:
                noise = self.noise_stages[s - span[0]].run_blocks(noise)
            if trace is not None:
                trace.append((s, x.shape, None if noise is None else noise.shape))
            if span is not None and s == span[1]:
                x = self.channel_merge(x, noise)
                noise = None
        return x

    def forward(self, fused, use_branch: bool = True) -> Tensor:
        """Logits [b, num_classes] for fused inputs [b, 6, h, w]."""
        x = self.features(fused, use_branch)
        pooled = self.norm(x.mean(axis=1))
        b, c = pooled.shape
        # stacked 1-row products: BLAS picks a different kernel for a single
        # row, so a plain [b, c] product would depend on the batch size
        return self.head(pooled.reshape(b, 1, c)).reshape(b, self.cfg.num_classes)

    __call__ = forward

    def state_with_config(self) -> Dict[str, np.ndarray]:
        state = self.state_dict()
        state.update(self.cfg.to_arrays())
        return state

    @classmethod
    def from_state(cls, state: Dict[str, np.ndarray]) -> "NasaSwin":
        cfg = ModelConfig.from_arrays(state)
        model = cls(cfg)
        model.load_state_dict({k: v for k, v in state.items() if not k.startswith("__config__.")})
        return model

    def clone(self) -> "NasaSwin":
        return copy.deepcopy(self)


def forward(model: NasaSwin, batch, use_branch: bool = True) -> Tensor:
    return model.forward(batch, use_branch)
