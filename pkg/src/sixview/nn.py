"""Parameter containers and the layers the denoiser is assembled from.

A Module owns named parameter Tensors; ``named_parameters`` walks nested
modules depth-first using attribute order, so parameter naming (and hence
checkpoint layout) is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def norm_groups(channels: int) -> int:
    """Group count convention: min(8, channels); channels must divide."""
    g = min(8, channels)
    if channels % g:
        raise ValueError(f"channel count {channels} not divisible by {g} norm groups")
    return g


class Module:
    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}")

    def parameters(self):
        return dict(self.named_parameters())

    def param_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())


def he_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    scale = np.sqrt(2.0 / fan_in)
    return T.param(rng.standard_normal(shape).astype(np.float32) * np.float32(scale))


class Linear(Module):
    def __init__(self, rng, d_in, d_out, bias=True, zero_init=False):
        if zero_init:
            self.w = T.param(np.zeros((d_in, d_out), np.float32))
        else:
            self.w = he_init(rng, (d_in, d_out), d_in)
        self.b = T.param(np.zeros(d_out, np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.w, self.b)


class Conv2d(Module):
    def __init__(self, rng, c_in, c_out, k=3, stride=1, padding=None, zero_init=False):
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        if zero_init:
            self.w = T.param(np.zeros((c_out, c_in, k, k), np.float32))
        else:
            self.w = he_init(rng, (c_out, c_in, k, k), c_in * k * k)
        self.b = T.param(np.zeros(c_out, np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class GroupNorm(Module):
    def __init__(self, channels):
        self.groups = norm_groups(channels)
        self.gain = T.param(np.ones(channels, np.float32))
        self.bias = T.param(np.zeros(channels, np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return T.groupnorm(x, self.gain, self.bias, self.groups)


def _tokens_from_map(x: Tensor):
    """NCHW -> (B, H*W, C) token view plus the shape needed to go back."""
    n, c, h, w = x.shape
    return T.reshape(T.permute(x, (0, 2, 3, 1)), (n, h * w, c)), (n, c, h, w)


def _map_from_tokens(tok: Tensor, shape):
    n, c, h, w = shape
    return T.permute(T.reshape(tok, (n, h, w, c)), (0, 3, 1, 2))


class SelfAttention2d(Module):
    """Pre-norm single-head self-attention over spatial positions.

    The same block serves the reference-conditioning mechanism: in harvest
    mode it appends its key/value tokens to a collector list; in consume
    mode it attends over [self tokens ++ reference tokens].
    """

    def __init__(self, rng, channels):
        self.norm = GroupNorm(channels)
        self.q = Linear(rng, channels, channels)
        self.k = Linear(rng, channels, channels)
        self.v = Linear(rng, channels, channels)
        self.out = Linear(rng, channels, channels, zero_init=True)

    def __call__(self, x: Tensor, ref_kv=None, harvest=None) -> Tensor:
        tok, shape = _tokens_from_map(self.norm(x))
        n, c, h, w = shape
        flat = T.reshape(tok, (n * h * w, c))
        q = T.reshape(self.q(flat), (n, h * w, c))
        k = T.reshape(self.k(flat), (n, h * w, c))
        v = T.reshape(self.v(flat), (n, h * w, c))
        if harvest is not None:
            harvest.append((k, v))
        if ref_kv is not None:
            k = T.concat([k, ref_kv[0]], axis=1)
            v = T.concat([v, ref_kv[1]], axis=1)
        att = T.attention(q, k, v)
        proj = T.reshape(self.out(T.reshape(att, (n * h * w, c))), (n, h * w, c))
        return T.add(x, _map_from_tokens(proj, shape))


class CrossAttention2d(Module):
    """Cross-attention from spatial positions to L conditioning tokens.

    Key/value projections carry no bias so the phase-1 trainable set
    ("the KV matrices") is exactly two weight matrices per block.
    """

    def __init__(self, rng, channels, token_dim):
        self.norm = GroupNorm(channels)
        self.q = Linear(rng, channels, channels)
        self.k = Linear(rng, token_dim, channels, bias=False)
        self.v = Linear(rng, token_dim, channels, bias=False)
        self.out = Linear(rng, channels, channels, zero_init=True)

    def __call__(self, x: Tensor, tokens: Tensor) -> Tensor:
        # tokens: (B, L, D)
        tok, shape = _tokens_from_map(self.norm(x))
        n, c, h, w = shape
        bl, l, d = tokens.shape
        if bl != n:
            raise T.ShapeError(f"cross-attention: batch {bl} != {n}")
        q = T.reshape(self.q(T.reshape(tok, (n * h * w, c))), (n, h * w, c))
        tflat = T.reshape(tokens, (n * l, d))
        k = T.reshape(self.k(tflat), (n, l, c))
        v = T.reshape(self.v(tflat), (n, l, c))
        att = T.attention(q, k, v)
        proj = T.reshape(self.out(T.reshape(att, (n * h * w, c))), (n, h * w, c))
        return T.add(x, _map_from_tokens(proj, shape))


class ResBlock(Module):
    """Two 3x3 convs with group norms, SiLU, and an added time-embedding projection."""

    def __init__(self, rng, c_in, c_out, emb_dim):
        self.norm1 = GroupNorm(c_in)
        self.conv1 = Conv2d(rng, c_in, c_out)
        self.emb = Linear(rng, emb_dim, c_out)
        self.norm2 = GroupNorm(c_out)
        self.conv2 = Conv2d(rng, c_out, c_out, zero_init=True)
        self.skip = Conv2d(rng, c_in, c_out, k=1) if c_in != c_out else None

    def __call__(self, x: Tensor, emb: Tensor) -> Tensor:
        # emb: (B, emb_dim)
        h = self.conv1(T.silu(self.norm1(x)))
        n, c, hh, ww = h.shape
        e = T.reshape(self.emb(T.silu(emb)), (n, c, 1, 1))
        h = T.add(h, T.broadcast_hw(e, hh, ww))
        h = self.conv2(T.silu(self.norm2(h)))
        s = x if self.skip is None else self.skip(x)
        return T.add(s, h)


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Standard sin/cos features of integer timesteps; shape (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(np.float32)
