"""Deterministic denoise/reverse steps and the stepwise (t, delta)-error.

All step functions work on a single sample or a batch (leading axis); the
predictor decides how to interpret the shape.

At t = 0 the reverse step uses x itself as the clean-sample estimate
(alpha_bar[0] = 1) and queries eps_theta at t = 0 when the predictor allows
it, otherwise at t = 1. Flip ``predictor.defines_t0`` to change that.

The residual is not formed as ``x_recon - x_tilde_t``: near-consistent
predictors make that a difference of nearly equal numbers. It is evaluated
through the equivalent closed form in :func:`_round_trip_coef`, and the
error is its squared norm. ``x_recon`` is still the plain psi output, so
``x_recon - x_tilde_t`` matches ``residual`` up to rounding of ``x_recon``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .foundation import l2_sq
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class StepConfig:
    t_se: int
    delta: int

    def validate(self, T: int) -> "StepConfig":
        if self.delta < 1:
            raise InvalidArgument(f"invalid StepConfig: delta={self.delta} < 1")
        if self.t_se < 0 or self.t_se + self.delta > T:
            raise InvalidArgument(f"invalid StepConfig: need 0 <= t_se and t_se + delta <= {T}, "
                                  f"got t_se={self.t_se}, delta={self.delta}")
        if self.t_se % self.delta:
            raise InvalidArgument(f"invalid StepConfig: t_se={self.t_se} is not a multiple of "
                                  f"delta={self.delta}")
        return self


@dataclass
class NoiseProfile:
    x_tilde_t: np.ndarray
    x_up: np.ndarray
    x_recon: np.ndarray
    residual: np.ndarray
    error: float


@dataclass
class ProfileBatch:
    """Profiles for a batch; ``errors[i]`` is the (t, delta)-error of sample i."""

    x_tilde_t: np.ndarray
    x_up: np.ndarray
    x_recon: np.ndarray
    residual: np.ndarray
    errors: np.ndarray

    def __len__(self):
        return self.errors.shape[0]

    def __getitem__(self, i) -> NoiseProfile:
        return NoiseProfile(self.x_tilde_t[i], self.x_up[i], self.x_recon[i], self.residual[i],
                            float(self.errors[i]))


def _eps(p, x, t, cond):
    return np.asarray(p.eval(x, t, cond), dtype=np.float64)


def _combine(s: NoiseSchedule, x0_hat, eps, t_to):
    ab = s.alpha_bar[t_to]
    return np.sqrt(ab) * x0_hat + np.sqrt(1.0 - ab) * eps


def _f(s, x, eps, t):
    ab = s.alpha_bar[t]
    return (x - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def f_theta(p, s: NoiseSchedule, x, t: int, cond=None) -> np.ndarray:
    """Predicted clean sample (x - sqrt(1 - abar_t) eps) / sqrt(abar_t)."""
    s.check_t(t, low=1)
    x = np.asarray(x, dtype=np.float64)
    return _f(s, x, _eps(p, x, t, cond), t)


def psi(p, s: NoiseSchedule, x, t: int, delta: int, cond=None) -> np.ndarray:
    """Deterministic denoising step x_t -> x_{t - delta}."""
    if delta < 1:
        raise InvalidArgument(f"delta must be >= 1, got {delta}")
    if t - delta < 0:
        raise InvalidArgument(f"psi needs t >= delta, got t={t}, delta={delta}")
    s.check_t(t, low=1)
    x = np.asarray(x, dtype=np.float64)
    eps = _eps(p, x, t, cond)
    return _combine(s, _f(s, x, eps, t), eps, t - delta)


def phi(p, s: NoiseSchedule, x, t: int, delta: int, cond=None) -> np.ndarray:
    """Deterministic reverse step x_t -> x_{t + delta}."""
    if delta < 1:
        raise InvalidArgument(f"delta must be >= 1, got {delta}")
    if t < 0 or t + delta > s.T:
        raise InvalidArgument(f"phi needs 0 <= t and t + delta <= {s.T}, got t={t}, delta={delta}")
    x = np.asarray(x, dtype=np.float64)
    if t == 0:
        eps = _eps(p, x, 0 if p.defines_t0 else 1, cond)
        x0_hat = x
    else:
        eps = _eps(p, x, t, cond)
        x0_hat = _f(s, x, eps, t)
    return _combine(s, x0_hat, eps, t + delta)


def reverse_chain(p, s: NoiseSchedule, x0, t_se: int, delta: int, cond=None) -> np.ndarray:
    """Apply phi at t = 0, delta, ..., t_se - delta."""
    StepConfig(t_se, delta).validate(s.T)
    x = np.asarray(x0, dtype=np.float64)
    for t in range(0, t_se, delta):
        x = phi(p, s, x, t, delta, cond)
    return x


def _round_trip_coef(s: NoiseSchedule, t: int, delta: int) -> float:
    """c with x_recon - x_tilde == c * (eps(x_tilde, t) - eps(x_up, t + delta)).

    Writing P = abar[t + delta] / abar[t], the round trip phi -> psi leaves
    (1 - P) / P / (sqrt(1 - abar_t) + sqrt(abar_t (1 - abar_{t+d}) / abar_{t+d})).
    1 - P comes from expm1 of an fsum of log1p(-beta), so small steps keep
    full relative precision instead of cancelling.
    """
    log_p = math.fsum(np.log1p(-s.beta[t + 1:t + delta + 1]).tolist())
    one_minus_p = -math.expm1(log_p)
    ab, ab_up = s.alpha_bar[t], s.alpha_bar[t + delta]
    denom = math.sqrt(1.0 - ab) + math.sqrt(ab * (1.0 - ab_up) / ab_up)
    return one_minus_p / math.exp(log_p) / denom


def _stages(p, s, x0, cfg: StepConfig, cond):
    cfg.validate(s.T)
    t, d = cfg.t_se, cfg.delta
    x_tilde = reverse_chain(p, s, x0, t, d, cond)
    eps_in = _eps(p, x_tilde, t if (t > 0 or p.defines_t0) else 1, cond)
    x0_hat = x_tilde if t == 0 else _f(s, x_tilde, eps_in, t)
    x_up = _combine(s, x0_hat, eps_in, t + d)
    # psi is applied at t_se + delta so the reconstruction lands back on t_se
    eps_up = _eps(p, x_up, t + d, cond)
    x_recon = _combine(s, _f(s, x_up, eps_up, t + d), eps_up, t)
    # same quantity as x_recon - x_tilde, without the cancellation
    residual = _round_trip_coef(s, t, d) * (eps_in - eps_up)
    return x_tilde, x_up, x_recon, residual


def t_delta_error(p, s: NoiseSchedule, x0, cfg: StepConfig, cond=None) -> NoiseProfile:
    x_tilde, x_up, x_recon, residual = _stages(p, s, x0, cfg, cond)
    return NoiseProfile(x_tilde, x_up, x_recon, residual, l2_sq(residual, np.zeros_like(residual)))


def profile_batch(p, s: NoiseSchedule, X, cfg: StepConfig, cond=None) -> ProfileBatch:
    """Vectorised :func:`t_delta_error` over the leading axis of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    x_tilde, x_up, x_recon, residual = _stages(p, s, X, cfg, cond)
    flat = residual.reshape(X.shape[0], -1)
    errors = kernels.row_sq_dist(flat, np.zeros_like(flat))
    return ProfileBatch(x_tilde, x_up, x_recon, residual, errors)


# -- latent-space variant -----------------------------------------------------

class IdentityEncoder:
    def __call__(self, x):
        return np.asarray(x, dtype=np.float64)


class LinearEncoder:
    """v = W @ flatten(x)."""

    def __init__(self, weight):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.latent_shape = (self.weight.shape[0],)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.weight.shape[1]:
            raise InvalidArgument(f"encoder expects {self.weight.shape[1]} inputs, got {x.size}")
        return self.weight @ x


class AvgPoolEncoder:
    """Non-overlapping mean pooling by ``factor`` along every axis."""

    def __init__(self, factor: int = 2):
        self.factor = int(factor)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        f = self.factor
        if any(d % f for d in x.shape):
            raise InvalidArgument(f"shape {x.shape} is not divisible by pooling factor {f}")
        split = []
        for d in x.shape:
            split += [d // f, f]
        return x.reshape(split).mean(axis=tuple(range(1, 2 * x.ndim, 2)))


def latent_t_error(p, encoder, s: NoiseSchedule, x0, cfg: StepConfig, cond=None) -> NoiseProfile:
    """(t, delta)-error of the encoded sample, with ``cond`` passed to every eps_theta call."""
    v0 = encoder(x0)
    expected = getattr(encoder, "latent_shape", None) or getattr(p, "sample_shape", None)
    if expected is not None and tuple(v0.shape) != tuple(expected):
        raise InvalidArgument(f"latent shape {v0.shape} does not match expected {tuple(expected)}")
    return t_delta_error(p, s, v0, cfg, cond)
