"""Perception: per-frame audio filter-bank features and learned encoders.

Each observed frame is encoded twice: the mesh vertices pass through a small
visual encoder (per-vertex linear map, convolution over the vertex axis,
global max pool, projection) and the frame's log filter-bank energies pass
through a learned linear projection. Both land in 512 dimensions and are
concatenated into the 1024-dim frame representation; observation frames are
then concatenated in time order into one flat conditioning vector.

The audio path replaces a pretrained speech model with a deterministic
mel-spaced triangular filter bank so the whole artifact stays self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .nn import Param, conv1d_same, conv1d_same_backward, gauss_init, linear, linear_backward

VISUAL_DIM = 512
AUDIO_DIM = 512
FUSED_DIM = VISUAL_DIM + AUDIO_DIM


class FeatureError(ValueError):
    """Raised for empty tracks, bad rates, or misaligned encoder inputs."""


@dataclass(frozen=True)
class AudioTrack:
    """Mono audio: samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise FeatureError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(s)):
            raise FeatureError("audio contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class FilterBankConfig:
    n_bands: int = 26
    fmin: float = 0.0
    fmax: float | None = None   # None means Nyquist
    floor: float = 1e-10


@dataclass(frozen=True)
class EncoderConfig:
    channels: int = 64          # per-vertex feature width C
    kernel: int = 3             # vertex-axis convolution width
    n_bands: int = 26           # filter-bank bands F fed to the audio projection


@dataclass
class EncoderParams:
    """Weights of the visual encoder and the audio projection."""

    vis_in_w: Param    # [3, C]
    vis_in_b: Param    # [C]
    vis_conv_w: Param  # [k, C, C]
    vis_conv_b: Param  # [C]
    vis_out_w: Param   # [C, 512]
    vis_out_b: Param   # [512]
    aud_w: Param       # [F, 512]
    aud_b: Param       # [512]


@dataclass(frozen=True)
class FrameFeatures:
    visual: np.ndarray  # [512]
    audio: np.ndarray   # [512]

    @property
    def fused(self) -> np.ndarray:
        return np.concatenate([self.visual, self.audio])


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    c, k, f = cfg.channels, cfg.kernel, cfg.n_bands
    if k % 2 != 1:
        raise FeatureError(f"convolution kernel must be odd, got {k}")
    return EncoderParams(
        vis_in_w=gauss_init(rng, (3, c), fan_in=3),
        vis_in_b=Param(np.zeros(c)),
        vis_conv_w=gauss_init(rng, (k, c, c), fan_in=k * c),
        vis_conv_b=Param(np.zeros(c)),
        vis_out_w=gauss_init(rng, (c, VISUAL_DIM), fan_in=c),
        vis_out_b=Param(np.zeros(VISUAL_DIM)),
        aud_w=gauss_init(rng, (f, AUDIO_DIM), fan_in=f),
        aud_b=Param(np.zeros(AUDIO_DIM)),
    )


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


@lru_cache(maxsize=16)
def _bank_matrix(sample_rate: int, n_fft: int, n_bands: int,
                 fmin: float, fmax: float) -> np.ndarray:
    """Triangular mel-spaced filters over rfft bins: [n_bands, n_fft//2 + 1]."""
    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * sample_rate / n_fft
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2))
    bank = np.zeros((n_bands, n_bins))
    for i in range(n_bands):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_hz - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_hz) / max(hi - center, 1e-12)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def band_center_frequencies(sample_rate: int, cfg: FilterBankConfig) -> np.ndarray:
    """Center frequency of each triangular band in Hz."""
    fmax = cfg.fmax if cfg.fmax is not None else sample_rate / 2.0
    edges = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(fmax), cfg.n_bands + 2))
    return edges[1:-1]


def frame_sample_range(sample_rate: int, fps: float, n: int) -> tuple[int, int]:
    """Half-open sample range covered by frame n (0-based)."""
    return int(np.floor(n * sample_rate / fps)), int(np.floor((n + 1) * sample_rate / fps))


def frame_audio_features(track: AudioTrack, fps: float, n: int,
                         cfg: FilterBankConfig = FilterBankConfig()) -> np.ndarray:
    """Log triangular filter-bank energies of one frame's audio samples.

    The frame's samples are Hann-windowed, zero-padded to a power-of-two FFT
    length, and reduced to band energies on the magnitude spectrum; energies
    are clamped at cfg.floor before the log.
    """
    if track.num_samples == 0:
        raise FeatureError("empty audio track")
    if fps <= 0:
        raise FeatureError(f"fps must be positive, got {fps}")
    start, end = frame_sample_range(track.sample_rate, fps, n)
    segment = np.zeros(max(end - start, 1))
    have = track.samples[max(start, 0):max(end, 0)]
    segment[:have.shape[0]] = have  # zero-pad past the track tail
    windowed = segment * np.hanning(segment.shape[0])
    fmax = cfg.fmax if cfg.fmax is not None else track.sample_rate / 2.0
    n_fft = _next_pow2(int(np.ceil(track.sample_rate / fps)) + 1)
    mag = np.abs(np.fft.rfft(windowed, n=n_fft))
    bank = _bank_matrix(track.sample_rate, n_fft, cfg.n_bands, cfg.fmin, fmax)
    return np.log(np.maximum(bank @ mag, cfg.floor))


def track_features(track: AudioTrack, fps: float, n_frames: int,
                   cfg: FilterBankConfig = FilterBankConfig()) -> np.ndarray:
    """Per-frame filter-bank features for a whole sequence: [N][F]."""
    return np.stack([frame_audio_features(track, fps, n, cfg) for n in range(n_frames)])


@dataclass
class VisualCache:
    vertices: np.ndarray
    h_lin: np.ndarray     # [V, C] after per-vertex linear map
    h_conv: np.ndarray    # [V, C] after vertex-axis convolution
    argmax: np.ndarray    # [C] winning vertex per channel
    pooled: np.ndarray    # [C]


def encode_visual(vertices: np.ndarray, params: EncoderParams,
                  cache: list | None = None) -> np.ndarray:
    """Encode one frame's vertices [V][3] into the 512-dim visual feature."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != params.vis_in_w.shape[0]:
        raise FeatureError(f"expected [V][3] vertices, got {vertices.shape}")
    h_lin = linear(vertices, params.vis_in_w, params.vis_in_b)
    h_conv = conv1d_same(h_lin, params.vis_conv_w, params.vis_conv_b)
    argmax = np.argmax(h_conv, axis=0)
    pooled = h_conv[argmax, np.arange(h_conv.shape[1])]
    out = linear(pooled, params.vis_out_w, params.vis_out_b)
    if cache is not None:
        cache.append(VisualCache(vertices, h_lin, h_conv, argmax, pooled))
    return out


def encode_visual_backward(dout: np.ndarray, cache: VisualCache,
                           params: EncoderParams) -> None:
    """Accumulate visual-encoder gradients for one frame."""
    dpooled = linear_backward(dout[None, :], cache.pooled[None, :],
                              params.vis_out_w, params.vis_out_b)[0]
    dh_conv = np.zeros_like(cache.h_conv)
    dh_conv[cache.argmax, np.arange(dh_conv.shape[1])] = dpooled  # max pool routes to winner
    dh_lin = conv1d_same_backward(dh_conv, cache.h_lin, params.vis_conv_w, params.vis_conv_b)
    linear_backward(dh_lin, cache.vertices, params.vis_in_w, params.vis_in_b)


def encode_frame(vertices: np.ndarray, audio_feats: np.ndarray,
                 params: EncoderParams) -> FrameFeatures:
    """Visual + audio features of a single frame."""
    visual = encode_visual(vertices, params)
    audio = linear(np.asarray(audio_feats, dtype=np.float64), params.aud_w, params.aud_b)
    return FrameFeatures(visual, audio)


@dataclass
class FuseCache:
    visual_caches: list[VisualCache]
    obs_audio: np.ndarray
    n_obs: int


def fuse_observation(obs_vertices: np.ndarray, obs_audio: np.ndarray,
                     params: EncoderParams,
                     cache_out: list | None = None) -> np.ndarray:
    """Flatten N_obs frames into one conditioning vector of N_obs * 1024.

    Each frame contributes concat(visual, audio projection); frames are laid
    out in time order.
    """
    obs_vertices = np.asarray(obs_vertices, dtype=np.float64)
    obs_audio = np.asarray(obs_audio, dtype=np.float64)
    if obs_vertices.shape[0] != obs_audio.shape[0]:
        raise FeatureError(
            f"observation frame counts differ: {obs_vertices.shape[0]} vertices vs "
            f"{obs_audio.shape[0]} audio"
        )
    if obs_audio.shape[1] != params.aud_w.shape[0]:
        raise FeatureError("audio feature width does not match projection weights")
    vis_caches: list[VisualCache] = []
    parts = []
    for i in range(obs_vertices.shape[0]):
        visual = encode_visual(obs_vertices[i], params, vis_caches)
        audio = linear(obs_audio[i], params.aud_w, params.aud_b)
        parts.append(visual)
        parts.append(audio)
    cond = np.concatenate(parts)
    if cache_out is not None:
        cache_out.append(FuseCache(vis_caches, obs_audio, obs_vertices.shape[0]))
    return cond


def fuse_observation_backward(dcond: np.ndarray, cache: FuseCache,
                              params: EncoderParams) -> None:
    """Accumulate encoder gradients from a conditioning-vector gradient."""
    for i in range(cache.n_obs):
        base = i * FUSED_DIM
        dvis = dcond[base:base + VISUAL_DIM]
        daud = dcond[base + VISUAL_DIM:base + FUSED_DIM]
        encode_visual_backward(dvis, cache.visual_caches[i], params)
        linear_backward(daud[None, :], cache.obs_audio[i][None, :],
                        params.aud_w, params.aud_b)
