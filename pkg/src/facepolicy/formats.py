"""Readers and writers for the binary containers: FANIM, FAUD, FCKP.

All formats are little-endian. Values are stored as f32 on disk regardless
of in-memory precision.

FANIM: magic "FAP1", u32 version=1, u32 V, u32 N, f32 fps,
       V*3 f32 template vertices, N*V*3 f32 frame vertices.
FAUD:  magic "FAU1", u32 version=1, u32 sample_rate, u64 num_samples,
       num_samples f32 samples.
FCKP:  magic "FCKP", u32 version=1, u32 config length, config JSON bytes,
       u32 block count, then per parameter block:
       u32 name length, name bytes, u64 element count, f32 data.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .features import AudioTrack
from .geom import FaceTemplate, VertexSequence

FANIM_MAGIC = b"FAP1"
FAUD_MAGIC = b"FAU1"
FCKP_MAGIC = b"FCKP"


class FormatError(ValueError):
    """Raised for bad magic, version, or truncated sections."""


def _read_exact(fh, count: int, section: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file: missing {section}")
    return data


def write_fanim(path: str | Path, seq: VertexSequence) -> None:
    """Write a vertex sequence plus its template to a FANIM file."""
    n, v = seq.num_frames, seq.num_vertices
    with open(path, "wb") as fh:
        fh.write(FANIM_MAGIC)
        fh.write(struct.pack("<IIIf", 1, v, n, float(seq.fps)))
        fh.write(seq.template.vertices.astype("<f4").tobytes())
        fh.write(seq.frames.astype("<f4").tobytes())


def read_fanim(path: str | Path) -> VertexSequence:
    """Read a FANIM file; rejects wrong magic or version."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != FANIM_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {FANIM_MAGIC!r}")
        version, v, n, fps = struct.unpack("<IIIf", _read_exact(fh, 16, "header"))
        if version != 1:
            raise FormatError(f"unsupported FANIM version {version}")
        template = np.frombuffer(
            _read_exact(fh, v * 3 * 4, "template vertices"), dtype="<f4"
        ).reshape(v, 3)
        frames = np.frombuffer(
            _read_exact(fh, n * v * 3 * 4, "frame vertices"), dtype="<f4"
        ).reshape(n, v, 3)
    return VertexSequence(frames, fps, FaceTemplate(template))


def write_faud(path: str | Path, track: AudioTrack) -> None:
    """Write an audio track to a FAUD file."""
    samples = track.samples.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(FAUD_MAGIC)
        fh.write(struct.pack("<IIQ", 1, int(track.sample_rate), samples.size))
        fh.write(samples.tobytes())


def read_faud(path: str | Path) -> AudioTrack:
    """Read a FAUD file; rejects wrong magic or version."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != FAUD_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {FAUD_MAGIC!r}")
        version, sample_rate, count = struct.unpack("<IIQ", _read_exact(fh, 16, "header"))
        if version != 1:
            raise FormatError(f"unsupported FAUD version {version}")
        samples = np.frombuffer(_read_exact(fh, count * 4, "samples"), dtype="<f4")
    return AudioTrack(samples, sample_rate)


def write_fckp(path: str | Path, config: dict, blocks: dict[str, np.ndarray]) -> None:
    """Write a checkpoint: config echo plus named f32 parameter blocks."""
    config_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FCKP_MAGIC)
        fh.write(struct.pack("<II", 1, len(config_bytes)))
        fh.write(config_bytes)
        fh.write(struct.pack("<I", len(blocks)))
        for name in sorted(blocks):
            data = np.ascontiguousarray(blocks[name], dtype="<f4")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<Q", data.size))
            fh.write(data.tobytes())


def read_fckp(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (config, flat f32 arrays by name)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != FCKP_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {FCKP_MAGIC!r}")
        version, config_len = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != 1:
            raise FormatError(f"unsupported FCKP version {version}")
        config = json.loads(_read_exact(fh, config_len, "config").decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "block count"))
        blocks: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "block name length"))
            name = _read_exact(fh, name_len, "block name").decode("utf-8")
            (size,) = struct.unpack("<Q", _read_exact(fh, 8, f"size of block '{name}'"))
            blocks[name] = np.frombuffer(
                _read_exact(fh, size * 4, f"data of block '{name}'"), dtype="<f4"
            )
    return config, blocks
