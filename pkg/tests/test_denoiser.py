import numpy as np
import pytest

from facepolicy.denoiser import (
    DenoiserConfig,
    DenoiserError,
    backward,
    forward,
    init_denoiser_params,
    sinusoidal_step_embedding,
)
from facepolicy.nn import named_params


def small_cfg(h=4, v=6, d=16, cond=20, step_dim=8):
    return DenoiserConfig(horizon=h, num_vertices=v, cond_dim=cond,
                          hidden_dim=d, kernel=3, step_embed_dim=step_dim)


def randomize(params, rng, scale=0.3):
    """Fill every weight (FiLM and output head included) with random values."""
    for p in named_params(params).values():
        p.value[...] = rng.normal(scale=scale, size=p.value.shape)


def naive_forward(a_k, k, cond, params, cfg):
    """Independent straight-loop forward pass, 64-bit."""
    def emb(k, dim):
        half = dim // 2
        out = np.empty(dim)
        for i in range(half):
            div = 10_000.0 ** (i / (half - 1)) if half > 1 else 1.0
            out[2 * i] = np.sin(k / div)
            out[2 * i + 1] = np.cos(k / div)
        return out

    c = np.concatenate([cond, emb(k, cfg.step_embed_dim)])
    x = a_k.reshape(cfg.horizon, cfg.frame_dim)
    h = np.zeros((cfg.horizon, cfg.hidden_dim))
    for i in range(cfg.horizon):
        for j in range(cfg.hidden_dim):
            acc = params.in_b.value[j]
            for m in range(cfg.frame_dim):
                acc += x[i, m] * params.in_w.value[m, j]
            h[i, j] = acc
    for bp in params.blocks():
        conv = np.zeros_like(h)
        off = cfg.kernel // 2
        for i in range(cfg.horizon):
            for j in range(cfg.hidden_dim):
                acc = bp.conv_b.value[j]
                for tap in range(cfg.kernel):
                    src = i + tap - off
                    if 0 <= src < cfg.horizon:
                        for m in range(cfg.hidden_dim):
                            acc += h[src, m] * bp.conv_w.value[tap, m, j]
                conv[i, j] = acc
        new_h = np.zeros_like(h)
        for i in range(cfg.horizon):
            for j in range(cfg.hidden_dim):
                flat = i * cfg.hidden_dim + j
                s = bp.scale_b.value[flat]
                t = bp.shift_b.value[flat]
                for m in range(c.shape[0]):
                    s += c[m] * bp.scale_w.value[m, flat]
                    t += c[m] * bp.shift_w.value[m, flat]
                mod = s * conv[i, j] + t
                new_h[i, j] = mod / (1.0 + np.exp(-mod))
        h = new_h
    y = np.zeros((cfg.horizon, cfg.frame_dim))
    for i in range(cfg.horizon):
        for j in range(cfg.frame_dim):
            acc = params.out_b.value[j]
            for m in range(cfg.hidden_dim):
                acc += h[i, m] * params.out_w.value[m, j]
            y[i, j] = acc
    return y.reshape(cfg.horizon, cfg.num_vertices, 3)


class TestStepEmbedding:
    def test_k_zero(self):
        emb = sinusoidal_step_embedding(0, 16)
        assert np.array_equal(emb[0::2], np.zeros(8))
        assert np.array_equal(emb[1::2], np.ones(8))

    def test_dim_two_is_base_frequency(self):
        emb = sinusoidal_step_embedding(7, 2)
        assert np.allclose(emb, [np.sin(7), np.cos(7)], atol=1e-15)

    def test_no_collisions_at_desk_scale(self):
        embs = [sinusoidal_step_embedding(k, 64) for k in range(101)]
        for i in range(101):
            for j in range(i + 1, 101):
                assert not np.array_equal(embs[i], embs[j])

    def test_odd_dim_rejected(self):
        with pytest.raises(DenoiserError):
            sinusoidal_step_embedding(3, 7)


class TestForward:
    def test_zero_params_zero_output(self):
        cfg = small_cfg()
        rng = np.random.default_rng(0)
        params = init_denoiser_params(cfg, rng)
        for p in named_params(params).values():
            p.value[...] = 0.0
        a_k = rng.normal(size=(4, 6, 3))
        out = forward(a_k, 5, rng.normal(size=20), params, cfg)
        assert np.array_equal(out, np.zeros_like(a_k))

    def test_matches_naive_loop_oracle(self):
        cfg = small_cfg()
        rng = np.random.default_rng(21)
        params = init_denoiser_params(cfg, rng)
        randomize(params, rng)
        a_k = rng.normal(size=(4, 6, 3))
        cond = rng.normal(size=20)
        out = forward(a_k, 13, cond, params, cfg)
        assert np.allclose(out, naive_forward(a_k, 13, cond, params, cfg), atol=1e-10)

    def test_shape_contract_and_determinism(self):
        cfg = small_cfg(h=5, v=3, d=8, cond=12)
        rng = np.random.default_rng(22)
        params = init_denoiser_params(cfg, rng)
        randomize(params, rng)
        a_k = rng.normal(size=(5, 3, 3))
        cond = rng.normal(size=12)
        out1 = forward(a_k, 2, cond, params, cfg)
        out2 = forward(a_k, 2, cond, params, cfg)
        assert out1.shape == a_k.shape
        assert np.array_equal(out1, out2)

    def test_doubling_film_scale_weights_doubles_modulation(self):
        cfg = small_cfg()
        rng = np.random.default_rng(23)
        params = init_denoiser_params(cfg, rng)
        randomize(params, rng)
        # silence the shift path of block 1 so modulation is scale * conv only
        params.block1.shift_w.value[...] = 0.0
        params.block1.shift_b.value[...] = 0.0
        a_k = rng.normal(size=(4, 6, 3))
        cond = rng.normal(size=20)
        caches: list = []
        forward(a_k, 3, cond, params, cfg, caches)
        before = caches[0].blocks[0].modulated.copy()
        params.block1.scale_w.value[...] *= 2.0
        params.block1.scale_b.value[...] *= 2.0
        caches.clear()
        forward(a_k, 3, cond, params, cfg, caches)
        assert np.allclose(caches[0].blocks[0].modulated, 2.0 * before, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        cfg = small_cfg()
        params = init_denoiser_params(cfg, np.random.default_rng(0))
        with pytest.raises(DenoiserError):
            forward(np.zeros((3, 6, 3)), 1, np.zeros(20), params, cfg)
        with pytest.raises(DenoiserError):
            forward(np.zeros((4, 6, 3)), 1, np.zeros(19), params, cfg)


def probe_loss(a_k, k, cond, params, cfg, weight):
    """Scalar probe loss: sum(weight * prediction)."""
    return float(np.sum(weight * forward(a_k, k, cond, params, cfg)))


class TestBackward:
    def test_zero_upstream_gradient(self):
        cfg = small_cfg()
        rng = np.random.default_rng(31)
        params = init_denoiser_params(cfg, rng)
        randomize(params, rng)
        caches: list = []
        forward(rng.normal(size=(4, 6, 3)), 4, rng.normal(size=20), params, cfg, caches)
        dcond = backward(np.zeros((4, 6, 3)), caches[0], params, cfg)
        assert np.array_equal(dcond, np.zeros(20))
        for p in named_params(params).values():
            assert np.array_equal(p.grad, np.zeros_like(p.grad))

    def test_missing_cache_rejected(self):
        cfg = small_cfg()
        params = init_denoiser_params(cfg, np.random.default_rng(0))
        with pytest.raises(DenoiserError):
            backward(np.zeros((4, 6, 3)), None, params, cfg)

    def test_accumulation_linearity(self):
        cfg = small_cfg()
        rng = np.random.default_rng(32)
        params = init_denoiser_params(cfg, rng)
        randomize(params, rng)
        a_k = rng.normal(size=(4, 6, 3))
        cond = rng.normal(size=20)
        upstream = rng.normal(size=(4, 6, 3))
        caches: list = []
        forward(a_k, 4, cond, params, cfg, caches)
        backward(upstream, caches[0], params, cfg)
        backward(upstream, caches[0], params, cfg)
        twice = {n: p.grad.copy() for n, p in named_params(params).items()}
        for p in named_params(params).values():
            p.zero_grad()
        backward(2.0 * upstream, caches[0], params, cfg)
        for n, p in named_params(params).items():
            assert np.allclose(p.grad, twice[n], atol=1e-12), n

    @pytest.mark.parametrize("trial", [0, 1, 2])
    def test_finite_differences_every_parameter_class(self, trial):
        cfg = small_cfg()
        rng = np.random.default_rng(100 + trial)
        params = init_denoiser_params(cfg, rng)
        randomize(params, rng)
        a_k = rng.normal(size=(4, 6, 3))
        cond = rng.normal(size=20)
        weight = rng.normal(size=(4, 6, 3))
        k = int(rng.integers(0, 50))

        caches: list = []
        forward(a_k, k, cond, params, cfg, caches)
        dcond = backward(weight, caches[0], params, cfg)
        analytic = {n: p.grad.copy() for n, p in named_params(params).items()}

        h = 1e-4
        for name, p in named_params(params).items():
            flat_idx = rng.choice(p.value.size, size=min(6, p.value.size),
                                  replace=False)
            for idx in flat_idx:
                orig = p.value.flat[idx]
                p.value.flat[idx] = orig + h
                up = probe_loss(a_k, k, cond, params, cfg, weight)
                p.value.flat[idx] = orig - h
                down = probe_loss(a_k, k, cond, params, cfg, weight)
                p.value.flat[idx] = orig
                numeric = (up - down) / (2 * h)
                denom = max(abs(numeric), abs(analytic[name].flat[idx]), 1e-8)
                assert abs(numeric - analytic[name].flat[idx]) / denom < 1e-4, \
                    f"{name}[{idx}]"
        # conditioning gradient via the same probe
        for idx in rng.choice(cond.size, size=5, replace=False):
            orig = cond[idx]
            cond[idx] = orig + h
            up = probe_loss(a_k, k, cond, params, cfg, weight)
            cond[idx] = orig - h
            down = probe_loss(a_k, k, cond, params, cfg, weight)
            cond[idx] = orig
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric), abs(dcond[idx]), 1e-8)
            assert abs(numeric - dcond[idx]) / denom < 1e-4
