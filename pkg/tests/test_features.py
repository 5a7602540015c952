import numpy as np
import pytest

from facepolicy.features import (
    AUDIO_DIM,
    FUSED_DIM,
    VISUAL_DIM,
    AudioTrack,
    EncoderConfig,
    FeatureError,
    FilterBankConfig,
    band_center_frequencies,
    encode_frame,
    encode_visual,
    encode_visual_backward,
    frame_audio_features,
    frame_sample_range,
    fuse_observation,
    fuse_observation_backward,
    init_encoder_params,
    track_features,
)
from facepolicy.nn import named_params


class TestAudioTrack:
    def test_bad_rate_rejected(self):
        with pytest.raises(FeatureError):
            AudioTrack(np.zeros(10), 0)

    def test_nonfinite_rejected(self):
        with pytest.raises(FeatureError):
            AudioTrack(np.array([0.0, np.inf]), 100)


class TestFrameAudioFeatures:
    def test_all_zero_audio_hits_floor(self):
        cfg = FilterBankConfig()
        track = AudioTrack(np.zeros(16000), 16000)
        feats = frame_audio_features(track, 30.0, 3, cfg)
        assert feats.shape == (26,)
        assert np.allclose(feats, np.log(1e-10), atol=1e-12)

    def test_sinusoid_peaks_in_its_band(self):
        # checked against a direct O(n^2) DFT in the oracle below
        sr = 16000
        cfg = FilterBankConfig()
        centers = band_center_frequencies(sr, cfg)
        band = 12
        freq = centers[band]
        t = np.arange(sr) / sr
        track = AudioTrack(0.5 * np.sin(2 * np.pi * freq * t), sr)
        feats = frame_audio_features(track, 30.0, 5, cfg)
        assert np.argmax(feats) == band

        # oracle: naive DFT magnitude of the same windowed frame
        lo, hi = frame_sample_range(sr, 30.0, 5)
        seg = track.samples[lo:hi] * np.hanning(hi - lo)
        n_fft = 1024  # next pow2 above 534
        n = np.arange(n_fft)
        padded = np.zeros(n_fft)
        padded[:seg.shape[0]] = seg
        bins = np.arange(n_fft // 2 + 1)
        dft = np.abs(padded @ np.exp(-2j * np.pi * np.outer(n, bins) / n_fft))
        peak_hz = bins[np.argmax(dft)] * sr / n_fft
        assert abs(peak_hz - freq) < sr / n_fft * 2

    def test_frame_past_track_end_equals_silence(self):
        cfg = FilterBankConfig()
        sr = 8000
        track = AudioTrack(np.random.default_rng(0).normal(scale=0.1, size=800), sr)
        beyond = frame_audio_features(track, 30.0, 50, cfg)
        silent = frame_audio_features(AudioTrack(np.zeros(800), sr), 30.0, 50, cfg)
        assert np.array_equal(beyond, silent)

    def test_empty_track_rejected(self):
        with pytest.raises(FeatureError):
            frame_audio_features(AudioTrack(np.zeros(0), 8000), 30.0, 0)

    def test_bad_fps_rejected(self):
        with pytest.raises(FeatureError):
            frame_audio_features(AudioTrack(np.zeros(100), 8000), 0.0, 0)

    def test_track_features_shape(self):
        track = AudioTrack(np.zeros(8000), 8000)
        feats = track_features(track, 25.0, 10, FilterBankConfig(n_bands=13))
        assert feats.shape == (10, 13)


def naive_visual_forward(vertices, params):
    """Straight-loop oracle for the visual encoder."""
    v = vertices.shape[0]
    c = params.vis_in_b.value.shape[0]
    h = np.zeros((v, c))
    for i in range(v):
        for j in range(c):
            acc = params.vis_in_b.value[j]
            for m in range(3):
                acc += vertices[i, m] * params.vis_in_w.value[m, j]
            h[i, j] = acc
    k = params.vis_conv_w.value.shape[0]
    off = k // 2
    conv = np.zeros_like(h)
    for i in range(v):
        for j in range(c):
            acc = params.vis_conv_b.value[j]
            for tap in range(k):
                src = i + tap - off
                if 0 <= src < v:
                    for m in range(c):
                        acc += h[src, m] * params.vis_conv_w.value[tap, m, j]
            conv[i, j] = acc
    pooled = conv.max(axis=0)
    out = params.vis_out_b.value.copy()
    for j in range(out.shape[0]):
        for m in range(c):
            out[j] += pooled[m] * params.vis_out_w.value[m, j]
    return out


class TestEncodeVisual:
    def test_zero_weights_zero_output(self):
        cfg = EncoderConfig(channels=8)
        params = init_encoder_params(cfg, np.random.default_rng(0))
        for p in named_params(params).values():
            p.value[...] = 0.0
        out = encode_visual(np.random.default_rng(1).normal(size=(10, 3)), params)
        assert np.array_equal(out, np.zeros(VISUAL_DIM))

    def test_matches_naive_loop_oracle(self):
        cfg = EncoderConfig(channels=6)
        rng = np.random.default_rng(41)
        params = init_encoder_params(cfg, rng)
        vertices = rng.normal(size=(9, 3))
        out = encode_visual(vertices, params)
        assert np.allclose(out, naive_visual_forward(vertices, params), atol=1e-10)

    def test_kernel_one_is_permutation_invariant(self):
        cfg = EncoderConfig(channels=8, kernel=1)
        rng = np.random.default_rng(42)
        params = init_encoder_params(cfg, rng)
        vertices = rng.normal(size=(12, 3))
        perm = rng.permutation(12)
        out1 = encode_visual(vertices, params)
        out2 = encode_visual(vertices[perm], params)
        assert np.allclose(out1, out2, atol=1e-12)

    def test_bad_shape_rejected(self):
        cfg = EncoderConfig(channels=4)
        params = init_encoder_params(cfg, np.random.default_rng(0))
        with pytest.raises(FeatureError):
            encode_visual(np.zeros((5, 4)), params)


class TestFuseObservation:
    def setup_method(self):
        self.cfg = EncoderConfig(channels=8, n_bands=5)
        self.rng = np.random.default_rng(50)
        self.params = init_encoder_params(self.cfg, self.rng)

    def test_dimension_contract(self):
        frame = encode_frame(self.rng.normal(size=(7, 3)),
                             self.rng.normal(size=5), self.params)
        assert frame.visual.shape == (VISUAL_DIM,)
        assert frame.audio.shape == (AUDIO_DIM,)
        assert frame.fused.shape == (FUSED_DIM,)
        assert np.array_equal(frame.fused, np.concatenate([frame.visual, frame.audio]))

    def test_single_observation_length(self):
        cond = fuse_observation(self.rng.normal(size=(1, 7, 3)),
                                self.rng.normal(size=(1, 5)), self.params)
        assert cond.shape == (FUSED_DIM,)

    def test_two_frames_concatenate_in_time_order(self):
        obs_v = self.rng.normal(size=(2, 7, 3))
        obs_a = self.rng.normal(size=(2, 5))
        cond = fuse_observation(obs_v, obs_a, self.params)
        assert cond.shape == (2 * FUSED_DIM,)
        first = encode_frame(obs_v[0], obs_a[0], self.params)
        assert np.array_equal(cond[:FUSED_DIM], first.fused)

    def test_swapped_frames_swap_halves(self):
        obs_v = self.rng.normal(size=(2, 7, 3))
        obs_a = self.rng.normal(size=(2, 5))
        cond = fuse_observation(obs_v, obs_a, self.params)
        swapped = fuse_observation(obs_v[::-1], obs_a[::-1], self.params)
        assert np.array_equal(swapped[:FUSED_DIM], cond[FUSED_DIM:])
        assert np.array_equal(swapped[FUSED_DIM:], cond[:FUSED_DIM])

    def test_misaligned_rejected(self):
        with pytest.raises(FeatureError):
            fuse_observation(self.rng.normal(size=(2, 7, 3)),
                             self.rng.normal(size=(1, 5)), self.params)

    def test_determinism(self):
        obs_v = self.rng.normal(size=(2, 7, 3))
        obs_a = self.rng.normal(size=(2, 5))
        assert np.array_equal(fuse_observation(obs_v, obs_a, self.params),
                              fuse_observation(obs_v, obs_a, self.params))


class TestEncoderGradients:
    @pytest.mark.parametrize("trial", [0, 1, 2])
    def test_finite_differences_every_weight_class(self, trial):
        # spec-sized instance: V=12, C=8
        cfg = EncoderConfig(channels=8, n_bands=6)
        rng = np.random.default_rng(200 + trial)
        params = init_encoder_params(cfg, rng)
        obs_v = rng.normal(size=(2, 12, 3))
        obs_a = rng.normal(size=(2, 6))
        weight = rng.normal(size=2 * FUSED_DIM)

        def probe():
            return float(np.sum(weight * fuse_observation(obs_v, obs_a, params)))

        caches: list = []
        fuse_observation(obs_v, obs_a, params, caches)
        fuse_observation_backward(weight, caches[0], params)
        analytic = {n: p.grad.copy() for n, p in named_params(params).items()}

        h = 1e-4
        for name, p in named_params(params).items():
            idxs = rng.choice(p.value.size, size=min(6, p.value.size), replace=False)
            for idx in idxs:
                orig = p.value.flat[idx]
                p.value.flat[idx] = orig + h
                up = probe()
                p.value.flat[idx] = orig - h
                down = probe()
                p.value.flat[idx] = orig
                numeric = (up - down) / (2 * h)
                denom = max(abs(numeric), abs(analytic[name].flat[idx]), 1e-8)
                assert abs(numeric - analytic[name].flat[idx]) / denom < 1e-4, \
                    f"{name}[{idx}]"

    def test_visual_backward_routes_through_max_pool(self):
        cfg = EncoderConfig(channels=4)
        rng = np.random.default_rng(60)
        params = init_encoder_params(cfg, rng)
        vertices = rng.normal(size=(6, 3))
        caches: list = []
        encode_visual(vertices, params, caches)
        encode_visual_backward(np.zeros(VISUAL_DIM), caches[0], params)
        for p in named_params(params).values():
            assert np.array_equal(p.grad, np.zeros_like(p.grad))
