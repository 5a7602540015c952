"""Mesh-sequence types, action disentanglement and trajectory integration.

A vertex sequence holds N frames of V vertices in mm. Its action sequence
holds the frame-to-frame displacements (same N x V x 3 shape); the first
action frame is zero by convention so that integrating the actions from the
first frame reproduces the sequence exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Raised when a mesh sequence or action array violates its contract."""


@dataclass(frozen=True)
class FaceTemplate:
    """Neutral face mesh: V vertices, 3 coordinates each (mm)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 1:
            raise ValidationError(f"template must be [V][3] with V >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("template contains non-finite coordinates")
        object.__setattr__(self, "vertices", v)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class VertexSequence:
    """Animated mesh: frames [N][V][3] (mm) at a fixed frame rate."""

    frames: np.ndarray
    fps: float
    template: FaceTemplate

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 3 or f.shape[2] != 3 or f.shape[0] < 1:
            raise ValidationError(f"frames must be [N][V][3] with N >= 1, got {f.shape}")
        if f.shape[1] != self.template.num_vertices:
            raise ValidationError(
                f"vertex count {f.shape[1]} does not match template {self.template.num_vertices}"
            )
        object.__setattr__(self, "frames", f)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class ActionSequence:
    """Per-frame vertex displacements [N][V][3] (mm/frame); actions[0] == 0."""

    actions: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1:
            raise ValidationError(f"actions must be [N][V][3] with N >= 1, got {a.shape}")
        object.__setattr__(self, "actions", a)

    @property
    def num_frames(self) -> int:
        return self.actions.shape[0]


@dataclass
class ValidationReport:
    """Outcome of validate_sequence; carries the first offending location."""

    ok: bool
    failures: list[str] = field(default_factory=list)
    first_bad_index: tuple[int, int, int] | None = None  # (frame, vertex, axis)


def compute_actions(x: VertexSequence) -> ActionSequence:
    """Disentangle a vertex sequence into per-frame displacement actions.

    actions[0] is the zero frame; actions[n] = frames[n] - frames[n-1] for
    n >= 1. Raises ValidationError on non-finite input.
    """
    frames = x.frames
    if not np.all(np.isfinite(frames)):
        raise ValidationError("vertex sequence contains non-finite values")
    actions = np.zeros_like(frames)
    if x.num_frames > 1:
        actions[1:] = frames[1:] - frames[:-1]
    return ActionSequence(actions)


def integrate_actions(a: ActionSequence, x1: np.ndarray, fps: float,
                      template: FaceTemplate) -> VertexSequence:
    """Integrate actions from the first-frame vertices x1.

    out[n] = x1 + sum of actions[0..n]. Accumulation runs in 64-bit; disk
    storage stays 32-bit elsewhere.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    actions = a.actions
    if x1.shape != actions.shape[1:]:
        raise ValidationError(f"x1 shape {x1.shape} does not match actions {actions.shape[1:]}")
    if not np.all(np.isfinite(actions)) or not np.all(np.isfinite(x1)):
        raise ValidationError("non-finite input to integrate_actions")
    frames = x1[None, :, :] + np.cumsum(actions, axis=0, dtype=np.float64)
    return VertexSequence(frames, fps, template)


def validate_sequence(x: VertexSequence) -> ValidationReport:
    """Check shape consistency, finiteness and fps > 0; never raises."""
    report = ValidationReport(ok=True)
    if not (x.fps > 0):
        report.ok = False
        report.failures.append(f"fps must be positive, got {x.fps}")
    finite = np.isfinite(x.frames)
    if not finite.all():
        bad = np.argwhere(~finite)[0]
        report.ok = False
        report.first_bad_index = (int(bad[0]), int(bad[1]), int(bad[2]))
        report.failures.append(
            f"non-finite value at frame {bad[0]}, vertex {bad[1]}, axis {bad[2]}"
        )
    if x.frames.shape[1] != x.template.num_vertices:
        report.ok = False
        report.failures.append("vertex count does not match template")
    return report
