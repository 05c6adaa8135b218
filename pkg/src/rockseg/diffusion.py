"""Forward and reverse diffusion over real-valued image fields.

The forward process is a Markov chain that mixes a field toward an
isotropic Gaussian over ``T`` steps with per-step variances ``beta_t``:

    x_t = sqrt(1 - beta_t) * x_{t-1} + sqrt(beta_t) * z_t

Writing ``alpha_t = 1 - beta_t`` and ``alpha_bar_t = prod_{s<=t} alpha_s``
(with ``alpha_bar_0 = 1``), the chain collapses to a single jump from the
clean field:

    x_t = sqrt(alpha_bar_t) * x_0 + sqrt(1 - alpha_bar_t) * eps

which inverts exactly when the noise is known:

    x_0 = (x_t - sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_bar_t)

The reverse direction replaces the true noise with an estimate from a
pluggable :class:`NoisePredictor` and takes ancestral steps

    x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)
              + sigma_t * z,    sigma_t = sqrt(beta_t) for t > 1, sigma_1 = 0.

Steps are 1-based: ``t`` ranges over ``1..T`` and ``t=0`` denotes the
clean field. Noise is drawn elementwise in row-major (channel-major)
order, so seeded runs are bit-reproducible. No trained network ships
here; :class:`GaussianOraclePredictor` is the analytically optimal
predictor for Gaussian data and serves as the desk-scale stand-in.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .validation import check_field, check_rng

__all__ = [
    "VarianceSchedule",
    "make_linear_schedule",
    "NoisePredictor",
    "GaussianOraclePredictor",
    "StoredNoisePredictor",
    "forward_step",
    "forward_jump",
    "recover_x0",
    "reverse_step",
    "sample",
]


class VarianceSchedule:
    """Per-step noise variances and their derived coefficients.

    Holds ``beta`` (strictly increasing in (0, 1)), ``alpha = 1 - beta``,
    and the cumulative products ``alpha_bar``. Arrays are read-only; the
    schedule is safe to share across threads.
    """

    def __init__(self, beta):
        beta = np.ascontiguousarray(beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1-D array")
        if beta[0] <= 0.0 or beta[-1] >= 1.0:
            raise ValueError("beta values must lie strictly inside (0, 1)")
        if beta.size > 1 and not np.all(np.diff(beta) > 0):
            raise ValueError("beta must be strictly increasing")
        self.beta = beta
        self.alpha = 1.0 - beta
        self.alpha_bar = np.cumprod(self.alpha)
        for arr in (self.beta, self.alpha, self.alpha_bar):
            arr.setflags(write=False)

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def check_step(self, t: int, allow_zero: bool = False) -> int:
        lo = 0 if allow_zero else 1
        if not (lo <= t <= self.T):
            raise ValueError(f"step t={t} outside [{lo}, {self.T}]")
        return int(t)

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative signal fraction at step ``t``; the empty product at t=0 is 1."""
        t = self.check_step(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def __repr__(self):
        return (
            f"VarianceSchedule(T={self.T}, beta_start={self.beta[0]:g}, "
            f"beta_end={self.beta[-1]:g})"
        )


def make_linear_schedule(
    T: int, beta_start: float = 1e-4, beta_end: float = 0.02
) -> VarianceSchedule:
    """Linearly spaced variances from ``beta_start`` (t=1) to ``beta_end`` (t=T)."""
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if T == 1:
        return VarianceSchedule(np.array([beta_start]))
    if not (0.0 < beta_start < beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
        )
    return VarianceSchedule(np.linspace(beta_start, beta_end, T))


@runtime_checkable
class NoisePredictor(Protocol):
    """Anything that estimates the noise component of a noisy field.

    ``predict`` must be stateless per call and return a finite field of
    the input's shape; a trained network can be attached later without
    touching the sampler.
    """

    def predict(self, x_t: np.ndarray, t: int) -> np.ndarray: ...


class GaussianOraclePredictor:
    """Exact noise posterior mean for fields with i.i.d. N(mu0, sigma0_sq) pixels.

    For Gaussian data the minimum-MSE estimate of the clean field given
    ``x_t`` has the closed form

        x0_hat = mu0 + (sqrt(ab) * sigma0_sq / (ab * sigma0_sq + 1 - ab))
                 * (x_t - sqrt(ab) * mu0),    ab = alpha_bar_t

    and the implied noise estimate is
    ``(x_t - sqrt(ab) * x0_hat) / sqrt(1 - ab)``.
    """

    def __init__(self, mu0: float, sigma0_sq: float, schedule: VarianceSchedule):
        if sigma0_sq <= 0:
            raise ValueError(f"sigma0_sq must be positive, got {sigma0_sq}")
        self.mu0 = float(mu0)
        self.sigma0_sq = float(sigma0_sq)
        self.schedule = schedule

    def predict(self, x_t: np.ndarray, t: int) -> np.ndarray:
        x_t = check_field(x_t)
        t = self.schedule.check_step(t)
        ab = self.schedule.alpha_bar_at(t)
        sqrt_ab = np.sqrt(ab)
        gain = sqrt_ab * self.sigma0_sq / (ab * self.sigma0_sq + 1.0 - ab)
        x0_hat = self.mu0 + gain * (x_t - sqrt_ab * self.mu0)
        return (x_t - sqrt_ab * x0_hat) / np.sqrt(1.0 - ab)


class StoredNoisePredictor:
    """Replays a fixed noise field; pairs with the jump inversion in tests."""

    def __init__(self, eps: np.ndarray):
        self.eps = check_field(eps)

    def predict(self, x_t: np.ndarray, t: int) -> np.ndarray:
        if x_t.shape != self.eps.shape:
            raise ValueError(
                f"stored noise shape {self.eps.shape} does not match field {x_t.shape}"
            )
        return self.eps


def forward_step(x_prev, t: int, sched: VarianceSchedule, rng) -> np.ndarray:
    """One forward noising step: ``sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) z``."""
    x_prev = check_field(x_prev)
    t = sched.check_step(t)
    rng = check_rng(rng)
    beta = sched.beta[t - 1]
    z = rng.standard_normal(x_prev.shape)
    return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * z


def forward_jump(x0, t: int, sched: VarianceSchedule, eps=None, rng=None):
    """Jump the clean field straight to step ``t`` in closed form.

    Supply either the noise field ``eps`` or an ``rng`` to draw it. Returns
    ``(x_t, eps)`` so the noise actually used stays available to the
    caller (for exact inversion or for training pairs). ``t=0`` returns the
    field unchanged with zero noise.
    """
    x0 = check_field(x0)
    t = sched.check_step(t, allow_zero=True)
    if t == 0:
        return x0.copy(), np.zeros_like(x0)
    if eps is None:
        if rng is None:
            raise ValueError("forward_jump needs either eps or rng")
        eps = check_rng(rng).standard_normal(x0.shape)
    else:
        eps = check_field(eps)
        if eps.shape != x0.shape:
            raise ValueError(f"eps shape {eps.shape} does not match x0 {x0.shape}")
    ab = sched.alpha_bar_at(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, eps


def recover_x0(x_t, t: int, eps_hat, sched: VarianceSchedule) -> np.ndarray:
    """Invert the forward jump given (an estimate of) its noise.

    ``x0 = (x_t - sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_bar_t)``.
    Exact when ``eps_hat`` is the true jump noise. ``t=0`` is rejected as
    misuse: there is nothing to invert.
    """
    x_t = check_field(x_t)
    eps_hat = check_field(eps_hat)
    if eps_hat.shape != x_t.shape:
        raise ValueError(f"eps_hat shape {eps_hat.shape} does not match x_t {x_t.shape}")
    t = sched.check_step(t)
    ab = sched.alpha_bar_at(t)
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def _predict_noise(predictor: NoisePredictor, x_t: np.ndarray, t: int) -> np.ndarray:
    eps_hat = np.asarray(predictor.predict(x_t, t), dtype=np.float64)
    if eps_hat.shape != x_t.shape:
        raise ValueError(
            f"predictor returned shape {eps_hat.shape} for field of shape {x_t.shape}"
        )
    if not np.all(np.isfinite(eps_hat)):
        raise ValueError("predictor returned non-finite values")
    return eps_hat


def reverse_step(x_t, t: int, predictor: NoisePredictor, sched: VarianceSchedule, rng) -> np.ndarray:
    """One ancestral denoising step from ``x_t`` to ``x_{t-1}``.

    Uses ``sigma_t = sqrt(beta_t)`` for ``t > 1`` and no noise at the final
    step (``sigma_1 = 0``); the rng is only consumed when noise is added.
    """
    x_t = check_field(x_t)
    t = sched.check_step(t)
    eps_hat = _predict_noise(predictor, x_t, t)
    beta = sched.beta[t - 1]
    alpha = sched.alpha[t - 1]
    ab = sched.alpha_bar_at(t)
    mean = (x_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(alpha)
    if t == 1:
        return mean
    z = check_rng(rng).standard_normal(x_t.shape)
    return mean + np.sqrt(beta) * z


def sample(shape, predictor: NoisePredictor, sched: VarianceSchedule, rng) -> np.ndarray:
    """Generate a field by running the reverse chain from pure noise.

    ``x_T`` is drawn elementwise standard normal, then ``reverse_step``
    runs for ``t = T .. 1``.
    """
    rng = check_rng(rng)
    x = rng.standard_normal(shape)
    for t in range(sched.T, 0, -1):
        x = reverse_step(x, t, predictor, sched, rng)
    return x
