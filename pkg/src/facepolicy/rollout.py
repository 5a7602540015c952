"""Closed-loop generation: denoise action windows, commit, integrate.

Windows follow the rollout schedule. For each one, a fresh Gaussian action
window a_K is drawn (the only randomness, so a fixed seed fixes the output),
the DDIM chain denoises it conditioned on the fused observation of the
window's first N_obs frames, and the scheduled actions are committed and
integrated onto the running vertex trajectory. Observations come from the
model's own predictions; frame 0 is the given anchor.
"""

from __future__ import annotations

import numpy as np

from .diffusion import PredictionMode, ddim_sample, make_schedule
from .features import AudioTrack, fuse_observation, track_features
from .formats import write_fanim
from .geom import FaceTemplate, VertexSequence
from .model import PolicyModel, denoiser_fn
from .sampler import rollout_schedule


class RolloutError(ValueError):
    """Raised for untrained/mismatched params or insufficient audio."""


def generate(template: FaceTemplate, x1: np.ndarray, track: AudioTrack,
             model: PolicyModel, n_frames: int, fps: float, seed: int,
             teacher_forced: bool = False,
             reference: VertexSequence | None = None) -> VertexSequence:
    """Generate n_frames of animation from audio, anchored at x1.

    With teacher_forced=True, observations are read from `reference` instead
    of the model's own predictions (diagnostic mode).
    """
    x1 = np.asarray(x1, dtype=np.float64)
    v = model.num_vertices
    if template.num_vertices != v or x1.shape != (v, 3):
        raise RolloutError(
            f"template/anchor vertex count does not match the trained model ({v})"
        )
    needed = int(np.floor(n_frames * track.sample_rate / fps))
    if track.num_samples < needed:
        raise RolloutError(
            f"audio too short: {track.num_samples} samples, need {needed} "
            f"for {n_frames} frames at {fps} fps"
        )
    if teacher_forced and (reference is None or reference.num_frames < n_frames):
        raise RolloutError("teacher-forced rollout needs a reference of at least n_frames")

    scfg = model.cfg.sampler
    dcfg = model.cfg.diffusion
    feats = model.normalize_audio(track_features(track, fps, n_frames, model.bank_cfg))
    sched = make_schedule(dcfg.k_steps, dcfg.beta_start, dcfg.beta_end)
    mode = PredictionMode(dcfg.prediction_mode)
    net = denoiser_fn(model)
    rng = np.random.default_rng(seed)

    frames = np.zeros((n_frames, v, 3))
    frames[0] = x1
    obs_source = reference.frames if teacher_forced else frames
    for entry in rollout_schedule(n_frames, scfg):
        if entry.warm_start:
            obs_v = np.repeat(obs_source[0][None], scfg.n_obs, axis=0)
            obs_a = np.repeat(feats[0][None], scfg.n_obs, axis=0)
        else:
            sl = slice(entry.start, entry.start + scfg.n_obs)
            obs_v = obs_source[sl]
            obs_a = feats[sl]
        cond = fuse_observation(obs_v, obs_a, model.encoder_params)
        a_start = rng.standard_normal((scfg.horizon, v, 3))
        window_actions = ddim_sample(a_start, cond, net, sched, dcfg.ddim_steps,
                                     mode, clip=model.action_clip)
        window_actions = window_actions * model.action_scale
        for f in entry.committed:
            frames[f] = frames[f - 1] + window_actions[f - entry.start]
    return VertexSequence(frames, fps, template)


def export_animation(seq: VertexSequence, path) -> None:
    """Write the generated sequence as a FANIM file (bit-exact round trip)."""
    write_fanim(path, seq)
