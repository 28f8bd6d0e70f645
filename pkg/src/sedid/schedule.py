"""Linear noise schedule and closed-form forward sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """beta/alpha/alpha_bar over ``T`` steps.

    All three arrays have length ``T + 1`` and are indexed by timestep.
    Index 0 is padding for ``beta``/``alpha`` (0 and 1) and the identity
    ``alpha_bar[0] = 1`` for ``alpha_bar``.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_start: float
    beta_end: float

    @classmethod
    def from_betas(cls, betas, beta_start=None, beta_end=None) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise InvalidArgument("betas must be a nonempty 1-D sequence")
        if not np.all((betas > 0) & (betas < 1)):
            raise InvalidArgument("every beta must lie in (0, 1)")
        beta = np.concatenate([[0.0], betas])
        alpha = 1.0 - beta
        # cumprod multiplies left to right, so alpha_bar[t] == alpha_bar[t-1] * alpha[t] exactly
        alpha_bar = np.cumprod(alpha)
        for arr in (beta, alpha, alpha_bar):
            arr.setflags(write=False)
        return cls(
            T=int(betas.size),
            beta=beta,
            alpha=alpha,
            alpha_bar=alpha_bar,
            beta_start=float(betas[0] if beta_start is None else beta_start),
            beta_end=float(betas[-1] if beta_end is None else beta_end),
        )

    def check_t(self, t: int, low: int = 0) -> int:
        if not low <= t <= self.T:
            raise InvalidArgument(f"timestep {t} outside [{low}, {self.T}]")
        return int(t)

    def to_entries(self) -> dict:
        from .foundation import json_entry

        return {
            "beta": self.beta[1:].copy(),
            "manifest": json_entry(
                {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}
            ),
        }


def linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if int(T) != T or T < 1:
        raise InvalidArgument(f"T must be a positive integer, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidArgument(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, int(T)), beta_start, beta_end)


def forward_sample(s: NoiseSchedule, x0, t: int, eps) -> np.ndarray:
    """Draw from q(x_t | x_0) given the noise: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    s.check_t(t, low=1)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise InvalidArgument(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    ab = s.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
