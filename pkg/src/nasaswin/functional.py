"""Differentiable layers built on :mod:`nasaswin.tensor`.

Each function here has a hand-written backward rule; the composite ones used
elsewhere (attention, patch merging) are assembled from these and the
primitives in ``tensor``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import ConfigurationError, DimensionError
from .tensor import Tensor, as_tensor, matmul, unbroadcast

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    peak = x.data.max(axis=axis, keepdims=True)
    if np.isneginf(peak).any():
        raise ValueError("fully masked slice")
    e = np.exp(x.data - peak)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._wrap(y, (x,), bwd, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    peak = x.data.max(axis=axis, keepdims=True)
    if np.isneginf(peak).any():
        raise ValueError("fully masked slice")
    shifted = x.data - peak
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    p = np.exp(y)
    return Tensor._wrap(y, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
    return Tensor._wrap(xd * cdf, (x,), lambda g: (g * (cdf + xd * pdf),), "gelu")


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    y = matmul(x, weight)
    return y if bias is None else y + bias


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the trailing axis, then apply the affine ``gamma``/``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} vs trailing extent {width}")
    if eps <= 0:
        raise ConfigurationError("layer_norm eps must be positive")
    xd, gd = x.data, gamma.data
    mu = xd.mean(axis=-1, keepdims=True)
    centred = xd - mu
    rstd = 1.0 / np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * rstd
    out = xhat * gd + beta.data

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gd
        dx = rstd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return Tensor._wrap(out, (x, gamma, beta), bwd, "layer_norm")


def cross_entropy(logits, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("cross_entropy needs a non-empty [n, classes] batch")
    n, k = logits.shape
    if labels.shape[0] != n:
        raise DimensionError(f"{labels.shape[0]} labels for {n} logits rows")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    ld = logits.data
    shifted = ld - ld.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bwd(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (g / n),)

    return Tensor._wrap(np.asarray(loss), (logits,), bwd, "cross_entropy")


def conv2d_grouped(x, weight, bias=None, stride: int = 1, groups: int = 1, padding: int = 0) -> Tensor:
    """Grouped 2-D cross-correlation.

    ``x`` is [c_in, h, w] or [batch, c_in, h, w]; ``weight`` is
    [c_out, c_in / groups, kh, kw]. Output channels ``g*c_out/groups`` onward
    see only input channels ``g*c_in/groups`` onward.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    unbatched = x.ndim == 3
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d_grouped expects [b,c,h,w] and [o,i,kh,kw], got {x.shape}, {weight.shape}")
    b, c_in, h, w = xd.shape
    c_out, cig, kh, kw = weight.shape
    if stride < 1 or groups < 1 or padding < 0:
        raise ConfigurationError("stride and groups must be positive, padding non-negative")
    if c_in % groups or c_out % groups:
        raise ConfigurationError(f"channels ({c_in} in, {c_out} out) not divisible by groups={groups}")
    if cig != c_in // groups:
        raise ConfigurationError(f"weight expects {cig} input channels per group, input has {c_in // groups}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ConfigurationError(f"kernel {kh}x{kw} does not fit padded input {hp}x{wp}")
    oh, ow = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    cog = c_out // groups

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = cols[:, :, :oh, :ow].reshape(b, groups, cig, oh, ow, kh, kw)
    wg = weight.data.reshape(groups, cog, cig, kh, kw)
    out = np.einsum("bgcyxij,gocij->bgoyx", cols, wg, optimize=True).reshape(b, c_out, oh, ow)
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise DimensionError(f"bias shape {bias.shape} != ({c_out},)")
        out = out + bias.data[None, :, None, None]
        parents = (x, weight, bias)
    if unbatched:
        out = out[0]

    def bwd(g):
        g4 = (g[None] if unbatched else g).reshape(b, groups, cog, oh, ow)
        gw = np.einsum("bgoyx,bgcyxij->gocij", g4, cols, optimize=True).reshape(weight.shape)
        gcols = np.einsum("bgoyx,gocij->bgcyxij", g4, wg, optimize=True).reshape(b, c_in, oh, ow, kh, kw)
        gxp = np.zeros((b, c_in, hp, wp))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[..., i, j]
        gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if unbatched:
            gx = gx[0]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 3, 4)).reshape(c_out))
        return tuple(grads)

    return Tensor._wrap(out, parents, bwd, "conv2d_grouped")


__all__ = [
    "softmax",
    "log_softmax",
    "gelu",
    "linear",
    "layer_norm",
    "cross_entropy",
    "conv2d_grouped",
    "unbroadcast",
]
