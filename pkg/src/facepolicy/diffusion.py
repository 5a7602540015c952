"""Noise schedules, forward noising, DDPM/DDIM reverse steps, training loss.

Diffusion steps are numbered k = 1..K; k = 0 is the clean signal. Schedule
arrays are stored with length K+1 so index k reads directly, with the k = 0
slot holding the clean-signal sentinel (beta 0, alpha_bar 1).

The reverse step follows
    a_{k-1} = (a_k - gamma_k * eps_hat) / sqrt(1 - beta_k) + sigma_k * z
with gamma_k = beta_k / sqrt(1 - alpha_bar_k) and sigma_k the DDPM posterior
standard deviation (sigma_1 = 0). DDIM runs deterministically (eta = 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np


class ScheduleError(ValueError):
    """Raised for invalid schedule parameters or step indices."""


class PredictionMode(str, Enum):
    EPSILON = "epsilon"   # network outputs the injected noise
    SAMPLE = "sample"     # network outputs the clean action window


# net(a_k, k, cond) -> prediction with a_k's shape
DenoiserFn = Callable[[np.ndarray, int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    k_steps: int
    beta: np.ndarray                      # [K+1], beta[0] = 0
    alpha: np.ndarray                     # 1 - beta
    alpha_bar: np.ndarray                 # cumulative product, alpha_bar[0] = 1
    sqrt_alpha_bar: np.ndarray
    sqrt_one_minus_alpha_bar: np.ndarray
    posterior_sigma: np.ndarray           # sqrt(beta_k (1 - ab_{k-1}) / (1 - ab_k))


def make_schedule(k_steps: int, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end over k_steps steps."""
    if k_steps < 1:
        raise ScheduleError(f"k_steps must be >= 1, got {k_steps}")
    if not (0.0 < beta_start < beta_end < 1.0):
        raise ScheduleError(
            f"need 0 < beta_start < beta_end < 1, got [{beta_start}, {beta_end}]"
        )
    beta = np.zeros(k_steps + 1)
    beta[1:] = np.linspace(beta_start, beta_end, k_steps)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    one_minus = 1.0 - alpha_bar
    sigma2 = np.zeros(k_steps + 1)
    sigma2[1:] = beta[1:] * one_minus[:-1] / one_minus[1:]  # zero at k = 1
    return NoiseSchedule(
        k_steps=k_steps,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        sqrt_alpha_bar=np.sqrt(alpha_bar),
        sqrt_one_minus_alpha_bar=np.sqrt(one_minus),
        posterior_sigma=np.sqrt(sigma2),
    )


def _check_step(sched: NoiseSchedule, k: int) -> None:
    if not 1 <= k <= sched.k_steps:
        raise ScheduleError(f"step {k} outside 1..{sched.k_steps}")


def forward_noise(a0: np.ndarray, k: int, eps: np.ndarray,
                  sched: NoiseSchedule) -> np.ndarray:
    """Noise a clean window to step k: sqrt(ab_k) a0 + sqrt(1 - ab_k) eps."""
    _check_step(sched, k)
    if a0.shape != eps.shape:
        raise ScheduleError(f"a0 shape {a0.shape} differs from eps shape {eps.shape}")
    return sched.sqrt_alpha_bar[k] * a0 + sched.sqrt_one_minus_alpha_bar[k] * eps


def epsilon_from_sample(a_k: np.ndarray, a0_hat: np.ndarray, k: int,
                        sched: NoiseSchedule) -> np.ndarray:
    """Implied noise of a sample-mode prediction."""
    return (a_k - sched.sqrt_alpha_bar[k] * a0_hat) / sched.sqrt_one_minus_alpha_bar[k]


def sample_from_epsilon(a_k: np.ndarray, eps_hat: np.ndarray, k: int,
                        sched: NoiseSchedule) -> np.ndarray:
    """Implied clean window of an epsilon-mode prediction."""
    return (a_k - sched.sqrt_one_minus_alpha_bar[k] * eps_hat) / sched.sqrt_alpha_bar[k]


def ddpm_reverse_step(a_k: np.ndarray, k: int, cond: np.ndarray, net: DenoiserFn,
                      sched: NoiseSchedule, rng: np.random.Generator | None,
                      mode: PredictionMode = PredictionMode.EPSILON) -> np.ndarray:
    """One stochastic DDPM step k -> k-1. Adds no noise at k = 1.

    Passing rng=None suppresses the noise term entirely (sigma treated as 0),
    which turns the chain into its deterministic posterior-mean trajectory.
    """
    _check_step(sched, k)
    pred = net(a_k, k, cond)
    if mode == PredictionMode.SAMPLE:
        eps_hat = epsilon_from_sample(a_k, pred, k, sched)
    else:
        eps_hat = pred
    gamma = sched.beta[k] / sched.sqrt_one_minus_alpha_bar[k]
    mean = (a_k - gamma * eps_hat) / np.sqrt(sched.alpha[k])
    sigma = sched.posterior_sigma[k]
    if rng is not None and sigma > 0.0:
        return mean + sigma * rng.standard_normal(a_k.shape)
    return mean


def ddim_step(a_k: np.ndarray, k: int, k_prev: int, cond: np.ndarray,
              net: DenoiserFn, sched: NoiseSchedule,
              mode: PredictionMode = PredictionMode.SAMPLE,
              clip: float | None = None) -> np.ndarray:
    """Deterministic DDIM step k -> k_prev (k_prev < k; k_prev = 0 allowed).

    When `clip` is given, the implied clean window is clamped to [-clip, clip]
    before the implied noise is derived; early bad estimates then stay inside
    the data range instead of echoing through the rest of the chain.
    """
    _check_step(sched, k)
    if not 0 <= k_prev < k:
        raise ScheduleError(f"invalid step pair {k} -> {k_prev}")
    pred = net(a_k, k, cond)
    if mode == PredictionMode.SAMPLE:
        a0_hat = pred
        if clip is not None:
            a0_hat = np.clip(a0_hat, -clip, clip)
        eps_hat = epsilon_from_sample(a_k, a0_hat, k, sched)
    else:
        eps_hat = pred
        a0_hat = sample_from_epsilon(a_k, eps_hat, k, sched)
        if clip is not None:
            a0_hat = np.clip(a0_hat, -clip, clip)
            eps_hat = epsilon_from_sample(a_k, a0_hat, k, sched)
    if k_prev == 0:
        return a0_hat
    return (sched.sqrt_alpha_bar[k_prev] * a0_hat
            + sched.sqrt_one_minus_alpha_bar[k_prev] * eps_hat)


def ddim_step_sequence(k_steps: int, n_steps: int) -> list[int]:
    """Evenly spaced descending step list K -> 0 with n_steps denoising steps."""
    if not 1 <= n_steps <= k_steps:
        raise ScheduleError(f"n_steps must be in 1..{k_steps}, got {n_steps}")
    ks = [int(round(k_steps - i * k_steps / n_steps)) for i in range(n_steps + 1)]
    out = [ks[0]]
    for k in ks[1:]:
        if k < out[-1]:
            out.append(k)
    if out[-1] != 0:
        out.append(0)
    return out


def ddim_sample(a_start: np.ndarray, cond: np.ndarray, net: DenoiserFn,
                sched: NoiseSchedule, n_steps: int,
                mode: PredictionMode = PredictionMode.SAMPLE,
                clip: float | None = None) -> np.ndarray:
    """Run the full DDIM chain from a_K down to the clean window."""
    steps = ddim_step_sequence(sched.k_steps, n_steps)
    a = a_start
    for k, k_prev in zip(steps[:-1], steps[1:]):
        a = ddim_step(a, k, k_prev, cond, net, sched, mode, clip)
    return a


def training_loss(a0: np.ndarray, cond: np.ndarray, k: int, eps: np.ndarray,
                  net: DenoiserFn, mode: PredictionMode,
                  sched: NoiseSchedule) -> tuple[float, np.ndarray]:
    """MSE between the network prediction and its mode's target.

    Returns (loss, dloss/dprediction); the gradient is 2 (pred - target) / numel.
    """
    a_k = forward_noise(a0, k, eps, sched)
    pred = net(a_k, k, cond)
    target = eps if mode == PredictionMode.EPSILON else a0
    residual = pred - target
    loss = float(np.mean(residual * residual))
    dpred = 2.0 * residual / residual.size
    return loss, dpred
