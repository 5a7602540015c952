"""Procedural audio-correlated talking meshes for end-to-end runs.

The face stands in as a unit hemisphere lattice with the y axis vertical.
Audio is a seeded sum of sinusoids under a slow positive amplitude envelope.
Vertices below the vertical midline (the mouth region) displace along their
normals proportionally to the envelope sampled at frame centers, so motion
and loudness correlate by construction; upper vertices oscillate at a slow
independent frequency. All displacement magnitudes stay at or below 0.1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import AudioTrack
from .formats import write_fanim, write_faud
from .geom import FaceTemplate, VertexSequence

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class SynthError(ValueError):
    """Raised for invalid generation sizes."""


def hemisphere_template(v: int) -> FaceTemplate:
    """V points on a unit hemisphere (Fibonacci lattice, y up)."""
    i = np.arange(v)
    y = (i + 0.5) / v
    r = np.sqrt(1.0 - y * y)
    phi = i * GOLDEN_ANGLE
    return FaceTemplate(np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1))


def make_synthetic(seed, v: int = 50, n: int = 60, fps: float = 30.0,
                   sample_rate: int = 16000, mouth_gain: float = 0.08,
                   brow_gain: float = 0.03, envelope_scale: float = 1.0,
                   ) -> tuple[FaceTemplate, VertexSequence, AudioTrack]:
    """One audio-correlated sequence: (template, vertices, audio)."""
    if v < 8:
        raise SynthError(f"need at least 8 vertices, got {v}")
    if n < 4:
        raise SynthError(f"need at least 4 frames, got {n}")
    rng = np.random.default_rng(seed)
    template = hemisphere_template(v)
    normals = template.vertices  # unit sphere centered at the origin

    n_samples = int(round(n * sample_rate / fps))
    t = np.arange(n_samples) / sample_rate
    n_tones = int(rng.integers(2, 5))
    freqs = rng.uniform(100.0, 1000.0, n_tones)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_tones)
    carrier = sum(np.sin(2.0 * np.pi * f * t + p) for f, p in zip(freqs, phases)) / n_tones
    env_f = rng.uniform(0.8, 1.5), rng.uniform(2.0, 4.0)
    env_p = rng.uniform(0.0, 2.0 * np.pi, 2)

    def envelope_at(times):
        return envelope_scale * (
            (0.55 + 0.45 * np.sin(2.0 * np.pi * env_f[0] * times + env_p[0]))
            * (0.55 + 0.45 * np.sin(2.0 * np.pi * env_f[1] * times + env_p[1]))
        )

    samples = 0.9 * envelope_at(t) * carrier
    track = AudioTrack(np.clip(samples, -1.0, 1.0), sample_rate)

    # the envelope sampled at frame centers drives the mouth region
    level = envelope_at((np.arange(n) + 0.5) / fps)
    peak = level.max()
    mouth_amount = mouth_gain * (level / peak if peak > 0 else level)

    y = template.vertices[:, 1]
    mid = (y.min() + y.max()) / 2.0
    mouth = y < mid
    upper = ~mouth
    brow_f = rng.uniform(0.2, 0.6)
    brow_p = rng.uniform(0.0, 2.0 * np.pi)
    frame_t = np.arange(n) / fps
    brow_amount = brow_gain * np.sin(2.0 * np.pi * brow_f * frame_t + brow_p)

    frames = np.repeat(template.vertices[None], n, axis=0)
    frames[:, mouth, :] += mouth_amount[:, None, None] * normals[mouth]
    frames[:, upper, :] += brow_amount[:, None, None] * normals[upper]
    return template, VertexSequence(frames, fps, template), track


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    seed: list
    split: str


def _split_sizes(count: int) -> tuple[int, int, int]:
    """train/val/test at an 8:2:2 ratio; remainder goes to train."""
    n_val = count * 2 // 12
    n_test = count * 2 // 12
    return count - n_val - n_test, n_val, n_test


def make_dataset(seed: int, count: int, out_dir: str | Path, v: int = 50,
                 n: int = 60, fps: float = 30.0, sample_rate: int = 16000) -> dict:
    """Write `count` FANIM+FAUD pairs plus a manifest with split assignment."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_train, n_val, _ = _split_sizes(count)
    entries = []
    for i in range(count):
        name = f"seq_{i:03d}"
        sub_seed = [seed, i]
        _, seq, track = make_synthetic(sub_seed, v=v, n=n, fps=fps,
                                       sample_rate=sample_rate)
        write_fanim(out_dir / f"{name}.fanim", seq)
        write_faud(out_dir / f"{name}.faud", track)
        split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
        entries.append(DatasetEntry(name, sub_seed, split))
    manifest = {
        "seed": seed,
        "vertices": v,
        "frames": n,
        "fps": fps,
        "sample_rate": sample_rate,
        "entries": [{"name": e.name, "seed": e.seed, "split": e.split} for e in entries],
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
