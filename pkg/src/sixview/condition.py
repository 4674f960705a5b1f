"""Conditioning pathways: scaled reference attention, global-embedding
token mixing, and the additive depth adapter.

Local conditioning runs the denoiser itself on the reference image (scaled
by a constant, then noised to the denoising timestep) and appends the
harvested self-attention key/value tokens inside every self-attention
block.  Global conditioning adds a learned per-token multiple of a pooled
image embedding to the constant conditioning tokens.  The depth adapter
encodes the tiled depth frame into per-resolution biases behind
zero-initialized projections, so an untrained adapter is a no-op.
"""

from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .param import add_noise
from .schedule import Schedule
from .tensor import Tensor

DEFAULT_REF_SCALE = 5.0


# ---------------------------------------------------------------------------
# Global conditioning

def init_mix_weights(length: int) -> np.ndarray:
    """Fresh mixing weights w_i = i/L for i in 1..L."""
    return (np.arange(1, length + 1, dtype=np.float32) / np.float32(length))


class PromptTokens(nn.Module):
    """Learned constant token matrix (L x D), the empty-prompt stand-in."""

    def __init__(self, rng, length: int, dim: int):
        self.length = length
        self.dim = dim
        self.tokens = T.param(rng.standard_normal((length, dim)).astype(np.float32) * 0.02)


class MixWeights(nn.Module):
    def __init__(self, length: int, frozen_zero: bool = False):
        if frozen_zero:
            self.w = Tensor(np.zeros(length, np.float32), requires_grad=False)
        else:
            self.w = T.param(init_mix_weights(length))


def mix_global(tokens: Tensor, i_emb: Tensor, w: Tensor) -> Tensor:
    """Row i of output = tokens_i + w_i * I  (single item, L x D)."""
    lt, d = tokens.shape
    if i_emb.shape != (d,) or w.shape != (lt,):
        raise T.ShapeError(
            f"mix_global: tokens {tokens.shape}, embedding {i_emb.shape}, weights {w.shape}")
    out = tokens.data + w.data[:, None] * i_emb.data[None, :]

    def bwd(g, wd=w.data, idata=i_emb.data):
        dt = g
        di = (g * wd[:, None]).sum(axis=0)
        dw = (g * idata[None, :]).sum(axis=1)
        return (dt, di, dw)

    return T.record([tokens, i_emb, w], out, bwd)


def mix_global_batched(tokens: Tensor, i_emb: Tensor, w: Tensor) -> Tensor:
    """(L,D) tokens + (B,D) embeddings + (L,) weights -> (B,L,D)."""
    lt, d = tokens.shape
    b, d2 = i_emb.shape
    if d2 != d or w.shape != (lt,):
        raise T.ShapeError(
            f"mix_global_batched: tokens {tokens.shape}, embedding {i_emb.shape}, weights {w.shape}")
    out = tokens.data[None, :, :] + w.data[None, :, None] * i_emb.data[:, None, :]

    def bwd(g, wd=w.data, idata=i_emb.data):
        dt = g.sum(axis=0)
        di = np.einsum("bld,l->bd", g, wd, optimize=True)
        dw = np.einsum("bld,bd->l", g, idata, optimize=True)
        return (dt, di, dw)

    return T.record([tokens, i_emb, w], out, bwd)


def tile_tokens(tokens: Tensor, batch: int) -> Tensor:
    """Repeat a constant (L,D) token matrix to (B,L,D)."""
    lt, d = tokens.shape
    out = np.broadcast_to(tokens.data[None], (batch, lt, d)).copy()
    return T.record([tokens], out, lambda g: (g.sum(axis=0),))


class GlobalEncoder(nn.Module):
    """Small convolutional head pooling the input view to a D-vector."""

    def __init__(self, rng, dim: int, width: int = 16):
        self.conv1 = nn.Conv2d(rng, 3, width, stride=2)
        self.norm1 = nn.GroupNorm(width)
        self.conv2 = nn.Conv2d(rng, width, 2 * width, stride=2)
        self.norm2 = nn.GroupNorm(2 * width)
        self.proj = nn.Linear(rng, 2 * width, dim)

    def __call__(self, view: Tensor) -> Tensor:
        h = T.silu(self.norm1(self.conv1(view)))
        h = T.silu(self.norm2(self.conv2(h)))
        n, c, hh, ww = h.shape
        pooled = _mean_spatial(T.reshape(h, (n, c, hh * ww)))
        return self.proj(pooled)


def _mean_spatial(x: Tensor) -> Tensor:
    """(N, C, P) -> (N, C) mean over positions."""
    n, c, p = x.shape
    out = x.data.mean(axis=2)
    return T.record([x], out, lambda g: (np.repeat(g[:, :, None], p, axis=2) / np.float32(p),))


# ---------------------------------------------------------------------------
# Reference branch

def prep_reference(ref_image: np.ndarray, scale: float, t: int, s: Schedule,
                   eps: np.ndarray) -> np.ndarray:
    """Scale the reference strictly *before* noising: add_noise(scale*ref, eps, t)."""
    if scale <= 0:
        raise ValueError("reference scale must be positive")
    ref = np.asarray(ref_image, np.float32) * np.float32(scale)
    return add_noise(ref, eps, t, s).x_t


def reference_attention(q: Tensor, k_self: Tensor, v_self: Tensor, refs=None,
                        mask=None) -> Tensor:
    """Self-attention with the reference K/V appended (2-D op contract).

    ``refs`` is a (k_ref, v_ref) pair or None; context length becomes
    L_self + L_ref.  ``mask`` covers the concatenated key axis.
    """
    if refs is None:
        return T.softmax_attention(q, k_self, v_self, mask)
    k_ref, v_ref = refs
    if k_ref.shape[1] != k_self.shape[1] or v_ref.shape[1] != v_self.shape[1]:
        raise T.ShapeError(
            f"reference_attention: feature dims differ "
            f"(self {k_self.shape}/{v_self.shape}, ref {k_ref.shape}/{v_ref.shape})")
    k = T.concat([k_self, k_ref], axis=0)
    v = T.concat([v_self, v_ref], axis=0)
    return T.softmax_attention(q, k, v, mask)


# ---------------------------------------------------------------------------
# Depth adapter

class DepthAdapter(nn.Module):
    """Tiled depth frame -> additive feature biases, one per UNet level.

    Final projections are zero-initialized: a freshly constructed adapter
    contributes exact zeros at every level.
    """

    def __init__(self, rng, widths):
        self.conv_in = nn.Conv2d(rng, 1, widths[0])
        self.downs = [nn.Conv2d(rng, widths[i], widths[i + 1], stride=2)
                      for i in range(len(widths) - 1)]
        self.outs = [nn.Conv2d(rng, w, w, k=1, zero_init=True) for w in widths]

    def __call__(self, depth: Tensor):
        feats = []
        h = T.silu(self.conv_in(depth))
        feats.append(self.outs[0](h))
        for i, down in enumerate(self.downs):
            h = T.silu(down(h))
            feats.append(self.outs[i + 1](h))
        return feats
