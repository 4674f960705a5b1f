"""The toy denoiser: a small UNet over tiled or single-view frames.

Self-attention and cross-attention (to the L conditioning tokens) sit at
the two coarsest resolutions plus the middle block.  The same network
doubles as the reference branch: run with ``harvest`` it records each
self-attention block's key/value tokens; run with ``ref_kv`` it appends
them.  A relative-pose embedding (added to the time embedding) exists in
every model but is only fed in single-view mode, so both view modes carry
identical parameter sets.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .condition import (
    DepthAdapter,
    GlobalEncoder,
    MixWeights,
    PromptTokens,
    mix_global_batched,
    tile_tokens,
)
from .layout import GRID_COLS, GRID_ROWS
from .pose import novel_pose_spec
from .rng import stream
from .tensor import Tensor


@dataclass(frozen=True)
class DenoiserConfig:
    view_res: int = 16
    widths: tuple = (16, 32, 64)
    view_mode: str = "tiled"  # tiled -> 3Hx2W frames; single -> HxW views
    target: str = "v"  # v | eps
    schedule_kind: str = "linear"
    timesteps: int = 1000
    token_len: int = 8
    token_dim: int = 64
    time_dim: int = 64
    ref_scale: float = 5.0
    global_cond: bool = True
    depth_adapter: bool = False
    encoder_width: int = 16
    drop_prob: float = 0.1
    min_snr_gamma: float | None = 5.0

    def __post_init__(self):
        if self.view_mode not in ("tiled", "single"):
            raise ValueError(f"view_mode must be tiled|single, got {self.view_mode!r}")
        if self.target not in ("v", "eps"):
            raise ValueError(f"target must be v|eps, got {self.target!r}")
        h, w = self.frame_shape()
        f = 1 << (len(self.widths) - 1)
        if h % f or w % f:
            raise ValueError(
                f"frame {h}x{w} not divisible by the total downsampling factor {f}")
        for c in self.widths:
            nn.norm_groups(c)

    def frame_shape(self):
        r = self.view_res
        if self.view_mode == "tiled":
            return GRID_ROWS * r, GRID_COLS * r
        return r, r

    def attn_levels(self):
        n = len(self.widths)
        return tuple(range(max(0, n - 2), n))

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return DenoiserConfig(**d)


def pose_features(pose_idx) -> np.ndarray:
    """sin/cos features of the fixed relative pose set; shape (B, 4)."""
    feats = []
    for i in np.asarray(pose_idx, int).reshape(-1):
        p = novel_pose_spec(int(i))
        e, a = np.deg2rad(p.elevation_deg), np.deg2rad(p.azimuth_deg)
        feats.append([np.sin(e), np.cos(e), np.sin(a), np.cos(a)])
    return np.asarray(feats, np.float32)


class Denoiser(nn.Module):
    def __init__(self, rng, cfg: DenoiserConfig):
        widths = cfg.widths
        levels = len(widths)
        attn = cfg.attn_levels()
        emb = cfg.time_dim
        self.time1 = nn.Linear(rng, cfg.time_dim, emb)
        self.time2 = nn.Linear(rng, emb, emb)
        self.pose1 = nn.Linear(rng, 4, emb)
        self.pose2 = nn.Linear(rng, emb, emb)
        self.conv_in = nn.Conv2d(rng, 3, widths[0])
        self.down_res = [nn.ResBlock(rng, widths[i], widths[i], emb) for i in range(levels)]
        self.down_sattn = [nn.SelfAttention2d(rng, widths[i]) if i in attn else None
                           for i in range(levels)]
        self.down_xattn = [nn.CrossAttention2d(rng, widths[i], cfg.token_dim) if i in attn else None
                           for i in range(levels)]
        self.downconv = [nn.Conv2d(rng, widths[i], widths[i + 1], stride=2)
                         for i in range(levels - 1)]
        top = widths[-1]
        self.mid_res1 = nn.ResBlock(rng, top, top, emb)
        self.mid_sattn = nn.SelfAttention2d(rng, top)
        self.mid_xattn = nn.CrossAttention2d(rng, top, cfg.token_dim)
        self.mid_res2 = nn.ResBlock(rng, top, top, emb)
        self.up_res = [nn.ResBlock(rng, 2 * widths[i], widths[i], emb) for i in range(levels)]
        self.up_sattn = [nn.SelfAttention2d(rng, widths[i]) if i in attn else None
                         for i in range(levels)]
        self.up_xattn = [nn.CrossAttention2d(rng, widths[i], cfg.token_dim) if i in attn else None
                         for i in range(levels)]
        self.upconv = [nn.Conv2d(rng, widths[i + 1], widths[i]) for i in range(levels - 1)]
        self.out_norm = nn.GroupNorm(widths[0])
        self.conv_out = nn.Conv2d(rng, widths[0], 3, zero_init=True)

    def __call__(self, x: Tensor, emb: Tensor, tokens: Tensor,
                 ref_kv=None, harvest=None, depth_feats=None) -> Tensor:
        ref_iter = iter(ref_kv) if ref_kv is not None else None

        def sattn(block, h):
            if block is None:
                return h
            return block(h, ref_kv=next(ref_iter) if ref_iter else None, harvest=harvest)

        levels = len(self.down_res)
        h = self.conv_in(x)
        if depth_feats is not None:
            h = T.add(h, depth_feats[0])
        skips = []
        for i in range(levels):
            h = self.down_res[i](h, emb)
            h = sattn(self.down_sattn[i], h)
            if self.down_xattn[i] is not None:
                h = self.down_xattn[i](h, tokens)
            skips.append(h)
            if i < levels - 1:
                h = self.downconv[i](h)
                if depth_feats is not None:
                    h = T.add(h, depth_feats[i + 1])
        h = self.mid_res1(h, emb)
        h = sattn(self.mid_sattn, h)
        h = self.mid_xattn(h, tokens)
        h = self.mid_res2(h, emb)
        for i in reversed(range(levels)):
            h = self.up_res[i](T.concat([h, skips[i]], axis=1), emb)
            h = sattn(self.up_sattn[i], h)
            if self.up_xattn[i] is not None:
                h = self.up_xattn[i](h, tokens)
            if i > 0:
                h = self.upconv[i - 1](T.upsample_nearest(h, 2))
        return self.conv_out(T.silu(self.out_norm(h)))


class DiffusionModel(nn.Module):
    """Denoiser plus every conditioning pathway, as one parameter namespace."""

    def __init__(self, cfg: DenoiserConfig, master_seed: int):
        rng = stream(master_seed, "init")
        self.cfg = cfg
        self.seed = int(master_seed)
        self.net = Denoiser(rng, cfg)
        self.prompt = PromptTokens(rng, cfg.token_len, cfg.token_dim)
        self.mix = MixWeights(cfg.token_len, frozen_zero=not cfg.global_cond)
        self.encoder = GlobalEncoder(rng, cfg.token_dim, cfg.encoder_width)
        self.adapter = DepthAdapter(rng, cfg.widths)

    # -- conditioning assembly -------------------------------------------
    def _time_embedding(self, t, pose_idx):
        temb = Tensor(nn.sinusoidal_embedding(t, self.cfg.time_dim))
        e = self.net.time2(T.silu(self.net.time1(temb)))
        if pose_idx is not None:
            pe = self.net.pose2(T.silu(self.net.pose1(Tensor(pose_features(pose_idx)))))
            e_ref = e
            e = T.add(e, pe)
            return e, e_ref
        return e, e

    def _tokens(self, batch, input_view, drop_global):
        if not self.cfg.global_cond or input_view is None:
            return tile_tokens(self.prompt.tokens, batch)
        emb = self.encoder(Tensor(input_view))
        if drop_global is not None and drop_global.any():
            keep = (~np.asarray(drop_global, bool)).astype(np.float32)
            mask = np.broadcast_to(keep[:, None], emb.shape).copy()
            emb = T.mul(emb, Tensor(mask))
        return mix_global_batched(self.prompt.tokens, emb, self.mix.w)

    def forward(self, x_t, t, *, input_view=None, ref_noised=None, depth_tiled=None,
                drop_global=None, pose_idx=None) -> Tensor:
        """Prediction (v or eps per config) for a model-domain noisy batch.

        All array arguments are numpy, batch-first; images live in [-1, 1]
        except depth which stays in [0, 1].  ``ref_noised`` is the already
        scaled-and-noised reference batch (see condition.prep_reference).
        """
        b = x_t.shape[0]
        emb_main, emb_ref = self._time_embedding(t, pose_idx)
        tokens = self._tokens(b, input_view, drop_global)
        ref_kv = None
        if ref_noised is not None:
            harvest = []
            self.net(Tensor(ref_noised), emb_ref, tokens, harvest=harvest)
            ref_kv = harvest
        depth_feats = None
        if depth_tiled is not None:
            if not self.cfg.depth_adapter:
                raise ValueError("depth conditioning passed but depth_adapter disabled")
            if depth_tiled.shape[2:] != self.cfg.frame_shape():
                raise ValueError(
                    f"depth {depth_tiled.shape[2:]} does not match frame {self.cfg.frame_shape()}")
            depth_feats = self.adapter(Tensor(depth_tiled))
        return self.net(Tensor(x_t), emb_main, tokens,
                        ref_kv=ref_kv, depth_feats=depth_feats)


# ---------------------------------------------------------------------------
# Training phases

PHASES = ("pretrain", "mv_attn", "mv_full")


@dataclass(frozen=True)
class TrainPhase:
    name: str
    steps: int
    peak_lr: float
    warmup: int
    lr_shape: str  # cosine | constant
    batch_size: int = 8

    def __post_init__(self):
        if self.name not in PHASES:
            raise ValueError(f"unknown phase {self.name!r}")
        if self.lr_shape not in ("cosine", "constant"):
            raise ValueError(f"lr_shape must be cosine|constant, got {self.lr_shape!r}")


def lr_at(step: int, phase: TrainPhase) -> float:
    """Linear warm-up to the peak, then cosine decay to zero or constant."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if phase.warmup > 0 and step <= phase.warmup:
        return phase.peak_lr * step / phase.warmup
    if phase.lr_shape == "constant":
        return phase.peak_lr
    span = max(1, phase.steps - phase.warmup)
    progress = min(1.0, (step - phase.warmup) / span)
    return phase.peak_lr * 0.5 * (1.0 + float(np.cos(np.pi * progress)))


def _is_mv_attn_param(name: str) -> bool:
    if "sattn" in name or name.startswith("mix."):
        return True
    if "xattn" in name and (name.endswith(".k.w") or name.endswith(".v.w")):
        return True
    return False


def trainable_params(model: DiffusionModel, phase_name: str) -> dict:
    """The exact parameter set a phase updates."""
    allp = dict(model.named_parameters())
    if phase_name in ("pretrain", "mv_full"):
        return allp
    if phase_name == "mv_attn":
        return {k: v for k, v in allp.items() if _is_mv_attn_param(k)}
    raise ValueError(f"unknown phase {phase_name!r}")
