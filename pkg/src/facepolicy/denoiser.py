"""Conditional denoising network for action windows.

Input is a noised action window [H][V][3], the diffusion step k, and a flat
conditioning vector from the observation encoders. The step is embedded
sinusoidally and appended to the conditioning. Per frame, vertices are
projected to a hidden width D, two temporal convolution blocks (kernel 3,
same padding) run over the H axis, each modulated by FiLM scale/shift maps
produced by a linear map from the conditioning, with a SiLU after each
block. An output projection maps back to V*3 per frame.

FiLM scale and shift are resolved per (window position, channel) rather than
per channel alone: the conditional mean of an action window varies along the
window, and a position-independent modulation of a noise-fed trunk could not
express that.

All gradients are analytic and accumulate into the parameter buffers;
forward caches activations when a cache list is supplied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    Param,
    conv1d_same,
    conv1d_same_backward,
    gauss_init,
    linear,
    linear_backward,
    silu,
    silu_backward,
    zeros_init,
)


class DenoiserError(ValueError):
    """Raised for shape mismatches or a missing activation cache."""


@dataclass(frozen=True)
class DenoiserConfig:
    horizon: int            # H, action window length
    num_vertices: int       # V
    cond_dim: int           # conditioning vector length from the encoders
    hidden_dim: int = 128   # D
    kernel: int = 3
    step_embed_dim: int = 64

    @property
    def frame_dim(self) -> int:
        return self.num_vertices * 3

    @property
    def full_cond_dim(self) -> int:
        return self.cond_dim + self.step_embed_dim


@dataclass
class FilmBlockParams:
    conv_w: Param     # [k, D, D]
    conv_b: Param     # [D]
    scale_w: Param    # [full_cond, H*D]
    scale_b: Param    # [H*D]
    shift_w: Param    # [full_cond, H*D]
    shift_b: Param    # [H*D]


@dataclass
class DenoiserParams:
    in_w: Param       # [V*3, D]
    in_b: Param       # [D]
    block1: FilmBlockParams
    block2: FilmBlockParams
    out_w: Param      # [D, V*3]
    out_b: Param      # [V*3]

    def blocks(self) -> tuple[FilmBlockParams, FilmBlockParams]:
        return (self.block1, self.block2)


def init_denoiser_params(cfg: DenoiserConfig, rng: np.random.Generator) -> DenoiserParams:
    """FiLM projections and the output head start at zero (identity modulation,
    zero prediction); the signal path gets scaled Gaussian weights."""
    d, fc, hd = cfg.hidden_dim, cfg.full_cond_dim, cfg.horizon * cfg.hidden_dim

    def block() -> FilmBlockParams:
        return FilmBlockParams(
            conv_w=gauss_init(rng, (cfg.kernel, d, d), fan_in=cfg.kernel * d),
            conv_b=zeros_init((d,)),
            scale_w=zeros_init((fc, hd)),
            scale_b=Param(np.ones(hd)),
            shift_w=zeros_init((fc, hd)),
            shift_b=zeros_init((hd,)),
        )

    return DenoiserParams(
        in_w=gauss_init(rng, (cfg.frame_dim, d), fan_in=cfg.frame_dim),
        in_b=zeros_init((d,)),
        block1=block(),
        block2=block(),
        out_w=zeros_init((d, cfg.frame_dim)),
        out_b=zeros_init((cfg.frame_dim,)),
    )


def sinusoidal_step_embedding(k: int, dim: int) -> np.ndarray:
    """Interleaved sin/cos of k over divisors spanning [1, 1e4] geometrically."""
    if dim % 2 != 0 or dim < 2:
        raise DenoiserError(f"embedding dim must be a positive even integer, got {dim}")
    if k < 0:
        raise DenoiserError(f"step must be >= 0, got {k}")
    half = dim // 2
    if half == 1:
        divisors = np.ones(1)
    else:
        divisors = 10_000.0 ** (np.arange(half) / (half - 1))
    phase = k / divisors
    emb = np.empty(dim)
    emb[0::2] = np.sin(phase)
    emb[1::2] = np.cos(phase)
    return emb


@dataclass
class _BlockCache:
    h_in: np.ndarray      # block input [H, D]
    h_conv: np.ndarray    # after convolution
    scale: np.ndarray     # FiLM scale [H, D]
    shift: np.ndarray     # FiLM shift [H, D]
    modulated: np.ndarray  # scale * h_conv + shift, pre-activation


@dataclass
class DenoiserCache:
    cond_full: np.ndarray  # conditioning with step embedding appended
    x_flat: np.ndarray     # [H, V*3]
    blocks: list[_BlockCache]
    h_out: np.ndarray      # input of the output projection


def forward(a_k: np.ndarray, k: int, cond: np.ndarray, params: DenoiserParams,
            cfg: DenoiserConfig, cache_out: list | None = None) -> np.ndarray:
    """Predict a window (epsilon or clean actions, per training mode)."""
    a_k = np.asarray(a_k, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    if a_k.shape != (cfg.horizon, cfg.num_vertices, 3):
        raise DenoiserError(
            f"window shape {a_k.shape} does not match config "
            f"({cfg.horizon}, {cfg.num_vertices}, 3)"
        )
    if cond.shape != (cfg.cond_dim,):
        raise DenoiserError(f"cond length {cond.shape} does not match {cfg.cond_dim}")
    c = np.concatenate([cond, sinusoidal_step_embedding(k, cfg.step_embed_dim)])
    x = a_k.reshape(cfg.horizon, cfg.frame_dim)
    h = linear(x, params.in_w, params.in_b)
    block_caches: list[_BlockCache] = []
    hd_shape = (cfg.horizon, cfg.hidden_dim)
    for bp in params.blocks():
        h_conv = conv1d_same(h, bp.conv_w, bp.conv_b)
        scale = (c @ bp.scale_w.value + bp.scale_b.value).reshape(hd_shape)
        shift = (c @ bp.shift_w.value + bp.shift_b.value).reshape(hd_shape)
        modulated = scale * h_conv + shift
        block_caches.append(_BlockCache(h, h_conv, scale, shift, modulated))
        h = silu(modulated)
    y = linear(h, params.out_w, params.out_b)
    if cache_out is not None:
        cache_out.append(DenoiserCache(c, x, block_caches, h))
    return y.reshape(cfg.horizon, cfg.num_vertices, 3)


def backward(dpred: np.ndarray, cache: DenoiserCache, params: DenoiserParams,
             cfg: DenoiserConfig) -> np.ndarray:
    """Accumulate gradients for every weight; return dloss/dcond.

    The step-embedding slice of the conditioning gradient is dropped (the
    embedding has no trainable parameters).
    """
    if cache is None:
        raise DenoiserError("backward requires the forward activation cache")
    c = cache.cond_full
    dy = np.asarray(dpred, dtype=np.float64).reshape(cfg.horizon, cfg.frame_dim)
    dh = linear_backward(dy, cache.h_out, params.out_w, params.out_b)
    dc = np.zeros_like(c)
    for bp, bc in zip(reversed(params.blocks()), reversed(cache.blocks)):
        dmod = silu_backward(dh, bc.modulated)
        dscale = (dmod * bc.h_conv).reshape(-1)   # [H*D]
        dshift = dmod.reshape(-1)
        dh_conv = dmod * bc.scale
        bp.scale_w.grad += np.outer(c, dscale)
        bp.scale_b.grad += dscale
        bp.shift_w.grad += np.outer(c, dshift)
        bp.shift_b.grad += dshift
        dc += bp.scale_w.value @ dscale + bp.shift_w.value @ dshift
        dh = conv1d_same_backward(dh_conv, bc.h_in, bp.conv_w, bp.conv_b)
    linear_backward(dh, cache.x_flat, params.in_w, params.in_b)
    return dc[:cfg.cond_dim]
