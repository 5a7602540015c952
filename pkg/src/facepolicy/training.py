"""Training loop: sample windows, noise their actions, regress, update.

Each optimizer step draws one window uniformly at random (batch size 1 by
default), noises its action targets to a uniform diffusion step, runs the
denoiser conditioned on the window's fused observations, and backpropagates
the mode-dependent MSE through denoiser and encoders. Updates use AdamW
(decoupled weight decay). An epoch is one pass of N_windows sampled windows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import denoiser as dn
from .config import TrainConfig
from .diffusion import NoiseSchedule, PredictionMode, make_schedule, training_loss
from .features import fuse_observation, fuse_observation_backward, track_features
from .geom import ActionSequence, VertexSequence, compute_actions
from .model import PolicyModel
from .sampler import SamplerConfig, enumerate_windows, slice_window


class TrainingError(RuntimeError):
    """Raised when a run must abort (for example a non-finite loss)."""


@dataclass
class SequenceData:
    """One training sequence with its precomputed actions and audio features."""

    name: str
    vertices: VertexSequence
    actions: ActionSequence
    audio_feats: np.ndarray   # [N][F]


def prepare_sequence(name: str, seq: VertexSequence, track,
                     bank_cfg) -> SequenceData:
    feats = track_features(track, seq.fps, seq.num_frames, bank_cfg)
    return SequenceData(name, seq, compute_actions(seq), feats)


class FlatParams:
    """All parameters re-viewed into one contiguous value/grad pair.

    Rebinds each Param's value and grad to slices of two flat buffers so the
    optimizer update and grad reset run as single vector operations. Order is
    fixed by sorted parameter name, keeping runs reproducible.
    """

    def __init__(self, params: dict):
        self.names = sorted(params)
        total = sum(params[n].value.size for n in self.names)
        self.values = np.zeros(total)
        self.grads = np.zeros(total)
        offset = 0
        for name in self.names:
            p = params[name]
            size = p.value.size
            shape = p.value.shape
            self.values[offset:offset + size] = p.value.ravel()
            p.value = self.values[offset:offset + size].reshape(shape)
            p.grad = self.grads[offset:offset + size].reshape(shape)
            offset += size


@dataclass
class TrainState:
    rng: np.random.Generator
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)
    flat: FlatParams | None = None

    def moments_for(self, name: str, shape) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.m:
            self.m[name] = np.zeros(shape)
            self.v[name] = np.zeros(shape)
        return self.m[name], self.v[name]


def optimizer_step(value: np.ndarray, grad: np.ndarray, m: np.ndarray,
                   v: np.ndarray, t: int, cfg: TrainConfig,
                   scratch: np.ndarray | None = None) -> None:
    """In-place AdamW update with bias correction and decoupled decay.

    Computes p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p) without
    allocating temporaries beyond one optional scratch buffer; the bias
    corrections are folded into scalars (sqrt(v_hat) + eps equals
    (sqrt(v) + eps * c2) / c2 with c2 = sqrt(1 - beta2^t)).
    """
    if scratch is None:
        scratch = np.empty_like(value)
    c1 = 1.0 - cfg.beta1 ** t
    c2 = np.sqrt(1.0 - cfg.beta2 ** t)
    m *= cfg.beta1
    np.multiply(grad, 1.0 - cfg.beta1, out=scratch)
    m += scratch
    v *= cfg.beta2
    np.multiply(grad, grad, out=scratch)
    scratch *= 1.0 - cfg.beta2
    v += scratch
    np.sqrt(v, out=scratch)
    scratch += cfg.eps * c2
    np.divide(m, scratch, out=scratch)
    scratch *= cfg.learning_rate * c2 / c1
    value *= 1.0 - cfg.learning_rate * cfg.weight_decay
    value -= scratch


@dataclass
class EpochSummary:
    epoch: int
    mean_loss: float
    steps: int


def _window_pool(dataset: list[SequenceData], cfg: SamplerConfig):
    pool = []
    for seq_idx, data in enumerate(dataset):
        for w in enumerate_windows(data.vertices.num_frames, cfg, data.name).windows:
            pool.append((seq_idx, w))
    return pool


def train_epoch(dataset: list[SequenceData], model: PolicyModel,
                tcfg: TrainConfig, sched: NoiseSchedule, state: TrainState,
                epoch: int = 0, log=None, max_steps: int | None = None) -> EpochSummary:
    """One epoch over uniformly sampled windows; returns the loss summary.

    `log` is an optional callable receiving one record dict per optimizer
    step. `max_steps` caps the total step counter across epochs.
    """
    pool = _window_pool(dataset, model.cfg.sampler)
    if not pool:
        raise TrainingError("no training windows: every sequence is shorter than the horizon")
    mode = PredictionMode(model.cfg.diffusion.prediction_mode)
    den_cfg = model.denoiser_cfg
    if state.flat is None:
        state.flat = FlatParams(model.all_params())
    flat = state.flat
    m, v = state.moments_for("__flat__", flat.values.shape)
    scratch = np.empty_like(flat.values)
    n_steps = math.ceil(len(pool) / tcfg.batch_size)
    losses = []
    for _ in range(n_steps):
        if max_steps is not None and state.step >= max_steps:
            break
        flat.grads.fill(0.0)
        step_loss = 0.0
        window_id = None
        for _ in range(tcfg.batch_size):
            seq_idx, w = pool[state.rng.integers(len(pool))]
            data = dataset[seq_idx]
            window_id = (data.name, w.start)
            sample = slice_window(data.vertices, data.actions, data.audio_feats, w)
            target = sample.target_actions / model.action_scale
            fuse_caches: list = []
            cond = fuse_observation(sample.obs_vertices,
                                    model.normalize_audio(sample.obs_audio),
                                    model.encoder_params, fuse_caches)
            k = int(state.rng.integers(1, sched.k_steps + 1))
            eps = state.rng.standard_normal(target.shape)
            den_caches: list = []

            def net(a_k, kk, c):
                return dn.forward(a_k, kk, c, model.denoiser_params, den_cfg, den_caches)

            loss, dpred = training_loss(target, cond, k, eps, net, mode, sched)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at step {state.step + 1}, "
                    f"window {window_id[0]}:{window_id[1]}"
                )
            dcond = dn.backward(dpred, den_caches[0], model.denoiser_params, den_cfg)
            fuse_observation_backward(dcond, fuse_caches[0], model.encoder_params)
            step_loss += loss
        step_loss /= tcfg.batch_size
        state.step += 1
        if tcfg.batch_size > 1:
            flat.grads /= tcfg.batch_size
        optimizer_step(flat.values, flat.grads, m, v, state.step, tcfg, scratch)
        losses.append(step_loss)
        state.loss_history.append(step_loss)
        if log is not None:
            log({"epoch": epoch, "step": state.step, "loss": step_loss,
                 "wall_time": time.time(), "window": list(window_id)})
    mean_loss = float(np.mean(losses)) if losses else float("nan")
    return EpochSummary(epoch, mean_loss, len(losses))


def action_rms(dataset: list[SequenceData]) -> float:
    """Root mean square of all action values across the training set."""
    total = sum(np.sum(d.actions.actions ** 2) for d in dataset)
    count = sum(d.actions.actions.size for d in dataset)
    return float(np.sqrt(total / count)) if count else 0.0


def audio_feature_stats(dataset: list[SequenceData]) -> tuple[np.ndarray, np.ndarray]:
    """Per-band mean and std of the filter-bank features over the training set."""
    feats = np.concatenate([d.audio_feats for d in dataset], axis=0)
    return feats.mean(axis=0), np.maximum(feats.std(axis=0), 1e-6)


def train(dataset: list[SequenceData], model: PolicyModel, seed: int,
          log=None, max_steps: int | None = None,
          epochs: int | None = None) -> list[EpochSummary]:
    """Run the configured number of epochs; returns per-epoch summaries.

    Sets model.action_scale to the training set's action RMS so diffusion
    operates on unit-scale targets (falls back to 1 for static data), and
    fixes the per-band audio feature normalization from the same data.
    """
    tcfg = model.cfg.train
    sched = make_schedule(model.cfg.diffusion.k_steps,
                          model.cfg.diffusion.beta_start,
                          model.cfg.diffusion.beta_end)
    rms = action_rms(dataset)
    model.action_scale = rms if rms > 0 else 1.0
    peak = max(float(np.max(np.abs(d.actions.actions))) for d in dataset)
    model.action_clip = max(peak / model.action_scale, 1.0)
    model.audio_mean, model.audio_std = audio_feature_stats(dataset)
    state = TrainState(rng=np.random.default_rng(seed))
    summaries = []
    for epoch in range(1, (epochs if epochs is not None else tcfg.epochs) + 1):
        summary = train_epoch(dataset, model, tcfg, sched, state,
                              epoch=epoch, log=log, max_steps=max_steps)
        if summary.steps == 0:
            break
        summaries.append(summary)
        if max_steps is not None and state.step >= max_steps:
            break
    return summaries
