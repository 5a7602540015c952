"""Fixed-horizon window enumeration for training and the rollout commit plan.

Frames are indexed from 0 throughout. A window of H contiguous frames starts
at `start`; its first N_obs frames are the observation slots and all H frames
carry action targets. During rollout, successive windows advance by N_act and
each commits the N_act action frames at offsets N_obs .. N_obs+N_act-1, so
every frame after the warm-start region is committed exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import ActionSequence, VertexSequence


class ConfigError(ValueError):
    """Raised for inconsistent sampler settings."""


@dataclass(frozen=True)
class SamplerConfig:
    horizon: int = 4      # H, window length in frames
    n_obs: int = 2        # observation steps per window
    n_act: int = 2        # committed action steps per window

    def __post_init__(self):
        if self.horizon < 1 or self.n_obs < 1 or self.n_act < 1:
            raise ConfigError("horizon, n_obs and n_act must be positive")
        if self.n_obs > self.horizon:
            raise ConfigError(f"n_obs {self.n_obs} exceeds horizon {self.horizon}")
        if self.n_act > self.horizon - self.n_obs + 1:
            raise ConfigError(
                f"n_act {self.n_act} exceeds horizon - n_obs + 1 = "
                f"{self.horizon - self.n_obs + 1}"
            )


@dataclass(frozen=True)
class Window:
    start: int
    horizon: int
    n_obs: int

    @property
    def obs_frames(self) -> range:
        return range(self.start, self.start + self.n_obs)

    @property
    def action_frames(self) -> range:
        return range(self.start, self.start + self.horizon)


@dataclass(frozen=True)
class WindowBuffer:
    windows: tuple[Window, ...]
    source: str = ""

    def __len__(self) -> int:
        return len(self.windows)


@dataclass(frozen=True)
class TrainingSample:
    obs_vertices: np.ndarray   # [N_obs][V][3]
    obs_audio: np.ndarray      # [N_obs][F]
    target_actions: np.ndarray  # [H][V][3]


@dataclass(frozen=True)
class ScheduleEntry:
    """One rollout window: where it starts and which frames it commits."""

    start: int
    committed: tuple[int, ...]
    warm_start: bool = False


def enumerate_windows(n_frames: int, cfg: SamplerConfig, source: str = "") -> WindowBuffer:
    """Every fully contained window; empty buffer when the sequence is shorter
    than the horizon. Count is max(0, N - H + 1)."""
    windows = tuple(
        Window(s, cfg.horizon, cfg.n_obs)
        for s in range(max(0, n_frames - cfg.horizon + 1))
    )
    return WindowBuffer(windows, source)


def slice_window(x: VertexSequence, a: ActionSequence, audio_feats: np.ndarray,
                 w: Window) -> TrainingSample:
    """Cut one training sample out of aligned per-frame arrays.

    audio_feats is [N][F], one feature row per frame. Raises IndexError when
    the window is not fully contained.
    """
    n = x.num_frames
    if a.num_frames != n or audio_feats.shape[0] != n:
        raise ConfigError("vertex, action and audio arrays must align per frame")
    if w.start < 0 or w.start + w.horizon > n:
        raise IndexError(f"window [{w.start}, {w.start + w.horizon}) outside 0..{n}")
    obs = slice(w.start, w.start + w.n_obs)
    return TrainingSample(
        obs_vertices=x.frames[obs].copy(),
        obs_audio=np.asarray(audio_feats[obs], dtype=np.float64).copy(),
        target_actions=a.actions[w.start:w.start + w.horizon].copy(),
    )


def rollout_schedule(n_frames: int, cfg: SamplerConfig) -> list[ScheduleEntry]:
    """Ordered commit plan covering a rollout of n_frames frames.

    Frame 0 is given (the anchor vertices), so it is never committed. When
    n_obs >= 2 a warm-start window at start 0, observed with repeat-first-
    frame padding, commits frames 1 .. n_obs-1. Regular windows then start at
    0, n_act, 2*n_act, ... and commit frames start+n_obs .. start+n_obs+
    n_act-1, clipped to the sequence end.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    entries: list[ScheduleEntry] = []
    warm_last = min(cfg.n_obs - 1, n_frames - 1)
    if warm_last >= 1:
        entries.append(ScheduleEntry(0, tuple(range(1, warm_last + 1)), warm_start=True))
    start = 0
    while start + cfg.n_obs <= n_frames - 1:
        first = start + cfg.n_obs
        last = min(first + cfg.n_act - 1, n_frames - 1)
        entries.append(ScheduleEntry(start, tuple(range(first, last + 1))))
        start += cfg.n_act
    return entries
