"""Bundles the trainable state: encoder + denoiser parameters and configs.

A PolicyModel is everything `generate` needs beyond the audio and template:
the run configuration, the vertex count it was trained for, and all weights.
Checkpoints echo the configuration so inference can rebuild the exact model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import denoiser as dn
from . import features as ft
from .config import RunConfig, config_from_dict, config_to_dict
from .formats import FormatError, read_fckp, write_fckp
from .nn import Param, named_params


@dataclass
class PolicyModel:
    cfg: RunConfig
    num_vertices: int
    fps: float
    encoder_params: ft.EncoderParams
    denoiser_params: dn.DenoiserParams
    # actions are standardized to unit RMS for diffusion and the audio
    # filter-bank features to zero mean / unit variance per band; both are
    # dataset statistics fixed at training time and echoed in checkpoints.
    # action_clip bounds the implied clean window during DDIM inference to
    # the training data's range (in normalized units)
    action_scale: float = 1.0
    action_clip: float | None = None
    audio_mean: np.ndarray | None = None   # [F]
    audio_std: np.ndarray | None = None    # [F]

    def normalize_audio(self, feats: np.ndarray) -> np.ndarray:
        if self.audio_mean is None:
            return feats
        return (feats - self.audio_mean) / self.audio_std

    @property
    def denoiser_cfg(self) -> dn.DenoiserConfig:
        return dn.DenoiserConfig(
            horizon=self.cfg.sampler.horizon,
            num_vertices=self.num_vertices,
            cond_dim=self.cfg.sampler.n_obs * ft.FUSED_DIM,
            hidden_dim=self.cfg.net.hidden_dim,
            kernel=self.cfg.net.kernel,
            step_embed_dim=self.cfg.net.step_embed_dim,
        )

    @property
    def bank_cfg(self) -> ft.FilterBankConfig:
        return self.cfg.bank

    def all_params(self) -> dict[str, Param]:
        params = named_params(self.encoder_params, "enc")
        params.update(named_params(self.denoiser_params, "den"))
        return params

    def zero_grads(self) -> None:
        for p in self.all_params().values():
            p.zero_grad()


def init_model(cfg: RunConfig, num_vertices: int, fps: float,
               rng: np.random.Generator) -> PolicyModel:
    if cfg.encoder.n_bands != cfg.bank.n_bands:
        raise ValueError(
            f"encoder.n_bands ({cfg.encoder.n_bands}) must match "
            f"bank.n_bands ({cfg.bank.n_bands})"
        )
    encoder_params = ft.init_encoder_params(cfg.encoder, rng)
    denoiser_cfg = dn.DenoiserConfig(
        horizon=cfg.sampler.horizon,
        num_vertices=num_vertices,
        cond_dim=cfg.sampler.n_obs * ft.FUSED_DIM,
        hidden_dim=cfg.net.hidden_dim,
        kernel=cfg.net.kernel,
        step_embed_dim=cfg.net.step_embed_dim,
    )
    denoiser_params = dn.init_denoiser_params(denoiser_cfg, rng)
    return PolicyModel(cfg, num_vertices, fps, encoder_params, denoiser_params)


def save_model(path, model: PolicyModel) -> None:
    config = config_to_dict(model.cfg)
    config["num_vertices"] = model.num_vertices
    config["fps"] = model.fps
    config["action_scale"] = model.action_scale
    config["action_clip"] = model.action_clip
    blocks = {name: p.value for name, p in model.all_params().items()}
    if model.audio_mean is not None:
        blocks["norm.audio_mean"] = model.audio_mean
        blocks["norm.audio_std"] = model.audio_std
    write_fckp(path, config, blocks)


def load_model(path) -> PolicyModel:
    """Rebuild a model from a checkpoint, verifying block names and sizes."""
    config, blocks = read_fckp(path)
    num_vertices = int(config.pop("num_vertices"))
    fps = float(config.pop("fps"))
    action_scale = float(config.pop("action_scale", 1.0))
    action_clip = config.pop("action_clip", None)
    cfg = config_from_dict(config)
    rng = np.random.default_rng(0)  # shapes only; values are overwritten
    model = init_model(cfg, num_vertices, fps, rng)
    if "norm.audio_mean" in blocks:
        model.audio_mean = blocks.pop("norm.audio_mean").astype(np.float64)
        model.audio_std = blocks.pop("norm.audio_std").astype(np.float64)
    params = model.all_params()
    if set(params) != set(blocks):
        missing = sorted(set(params) - set(blocks))
        extra = sorted(set(blocks) - set(params))
        raise FormatError(f"checkpoint blocks mismatch: missing={missing} extra={extra}")
    for name, p in params.items():
        if blocks[name].size != p.value.size:
            raise FormatError(
                f"block '{name}' has {blocks[name].size} elements, "
                f"expected {p.value.size}"
            )
        p.value[...] = blocks[name].astype(np.float64).reshape(p.value.shape)
    model.action_scale = action_scale
    model.action_clip = None if action_clip is None else float(action_clip)
    return model


def denoiser_fn(model: PolicyModel, cache_out: list | None = None):
    """Closure suitable for the diffusion steps: net(a_k, k, cond)."""
    cfg = model.denoiser_cfg

    def net(a_k: np.ndarray, k: int, cond: np.ndarray) -> np.ndarray:
        return dn.forward(a_k, k, cond, model.denoiser_params, cfg, cache_out)

    return net
