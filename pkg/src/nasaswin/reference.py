"""Slow loop implementations used as oracles by the self-test and the test suite."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np


def naive_attn_matrix(features: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Raw scores for one head: features [N, d], positions [N, 2]."""
    N, d = features.shape
    out = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            num = sum(abs(features[i, c] - features[j, c]) for c in range(d)) / d
            dist = math.hypot(positions[i, 0] - positions[j, 0], positions[i, 1] - positions[j, 1])
            out[i, j] = num / dist
    return out


def naive_nasa_attention(tokens: np.ndarray, params, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Loop form of noise-aware attention over tokens [B, nW, N, C]."""
    B, nW, N, C = tokens.shape
    h = params.heads
    d = C // h
    M = int(round(math.sqrt(N)))
    pos = np.array([(r, c) for r in range(M) for c in range(M)], dtype=float)
    wv, bv = params.value.weight.data, params.value.bias.data
    wp, bp = params.proj.weight.data, params.proj.bias.data
    mix = params.mix_weight.data
    if params.head_mix == "per_head":
        mix = np.diag(np.diag(mix))
    mb = params.mix_bias.data
    out = np.zeros_like(tokens, dtype=float)
    for b in range(B):
        for w in range(nW):
            x = tokens[b, w]
            raw = [naive_attn_matrix(x[:, k * d : (k + 1) * d], pos) for k in range(h)]
            v = x @ wv + bv
            heads_out = np.zeros((N, C))
            for k in range(h):
                scores = sum(mix[k, q] * raw[q] for q in range(h)) + mb[k]
                if mask is not None:
                    scores = scores + mask[w]
                for i in range(N):
                    row = scores[i] - scores[i].max()
                    e = np.exp(row)
                    p = e / e.sum()
                    heads_out[i, k * d : (k + 1) * d] = p @ v[:, k * d : (k + 1) * d]
            out[b, w] = heads_out @ wp + bp
    return out


def naive_dft2(x: np.ndarray) -> np.ndarray:
    """Direct O(h^2 w^2) 2-D DFT of a single [h, w] array."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    ys, xs = np.arange(h), np.arange(w)
    for u in range(h):
        for v in range(w):
            phase = np.exp(-2j * np.pi * (u * ys[:, None] / h + v * xs[None, :] / w))
            out[u, v] = (x * phase).sum()
    return out
