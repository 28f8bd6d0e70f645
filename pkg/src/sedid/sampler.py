"""Ancestral (DDPM) and deterministic (DDIM) generation."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .core import psi
from .errors import InvalidArgument, SamplerDiverged
from .foundation import Rng, archive_read, archive_write, json_entry, read_json_entry
from .schedule import NoiseSchedule


@dataclass
class SamplerConfig:
    mode: str = "ancestral"
    ddim_stepsize: int = 1
    seed: int = 0
    count: int = 512
    sigma: str = "beta"

    def __post_init__(self):
        if self.mode not in ("ancestral", "ddim"):
            raise InvalidArgument(f"unknown sampler mode {self.mode!r}")
        if self.sigma not in ("beta", "beta_tilde"):
            raise InvalidArgument(f"unknown sigma choice {self.sigma!r}")
        if self.ddim_stepsize < 1 or self.count < 1:
            raise InvalidArgument("ddim_stepsize and count must be >= 1")


def _sigmas(s: NoiseSchedule, kind: str) -> np.ndarray:
    if kind == "beta":
        return np.sqrt(s.beta)
    # posterior variance beta_t (1 - abar_{t-1}) / (1 - abar_t); index 0 unused
    var = np.zeros_like(s.beta)
    var[1:] = s.beta[1:] * (1.0 - s.alpha_bar[:-1]) / (1.0 - s.alpha_bar[1:])
    return np.sqrt(var)


def ancestral_steps(p, s: NoiseSchedule, x_T, noise, sigma: str = "beta", cond=None) -> np.ndarray:
    """Run t = T..1 from ``x_T``; ``noise[t]`` is z_t (ignored at t = 1).

    Pass ``noise=None`` to set every z to zero.
    """
    sig = _sigmas(s, sigma)
    x = np.asarray(x_T, dtype=np.float64)
    for t in range(s.T, 0, -1):
        eps = np.asarray(p.eval(x, t, cond), dtype=np.float64)
        coef = s.beta[t] / np.sqrt(1.0 - s.alpha_bar[t])
        x = (x - coef * eps) / np.sqrt(s.alpha[t])
        if t > 1 and noise is not None:
            x = x + sig[t] * noise[t]
        if not np.all(np.isfinite(x)):
            raise SamplerDiverged(t)
    return x


def sample_ancestral(p, s: NoiseSchedule, rng: Rng, shape, stochastic: bool = True,
                     sigma: str = "beta", cond=None) -> np.ndarray:
    """One draw of the DDPM denoising chain. x_T comes first from ``rng``, then z_T..z_2."""
    x_T = rng.normal(shape)
    noise = None
    if stochastic:
        noise = {t: rng.normal(shape) for t in range(s.T, 1, -1)}
    return ancestral_steps(p, s, x_T, noise, sigma, cond)


def ddim_grid(T: int, delta: int) -> list[int]:
    if delta < 1 or T % delta:
        raise InvalidArgument(f"DDIM grid from T={T} with step {delta} does not reach 0")
    return list(range(T, 0, -delta))


def ddim_from(p, s: NoiseSchedule, x_T, delta: int, cond=None) -> np.ndarray:
    x = np.asarray(x_T, dtype=np.float64)
    for t in ddim_grid(s.T, delta):
        x = psi(p, s, x, t, delta, cond)
        if not np.all(np.isfinite(x)):
            raise SamplerDiverged(t - delta)
    return x


def sample_ddim(p, s: NoiseSchedule, rng: Rng, shape, delta: int, cond=None) -> np.ndarray:
    ddim_grid(s.T, delta)
    return ddim_from(p, s, rng.normal(shape), delta, cond)


def generate(p, s: NoiseSchedule, cfg: SamplerConfig, sample_shape) -> np.ndarray:
    """``cfg.count`` samples stacked on a leading axis.

    Sample i uses its own substream ``Rng(cfg.seed).spawn(i)`` so results do
    not depend on batch composition; the chain itself runs batched.
    """
    sample_shape = tuple(sample_shape)
    base = Rng(cfg.seed)
    streams = [base.spawn(i) for i in range(cfg.count)]
    x_T = np.stack([r.normal(sample_shape) for r in streams])
    if cfg.mode == "ddim":
        return ddim_from(p, s, x_T, cfg.ddim_stepsize)
    # same draw order as sample_ancestral: z_T, z_{T-1}, ..., z_2
    z = np.stack([r.normal((s.T - 1,) + sample_shape) for r in streams], axis=1) if s.T > 1 else None
    noise = None if z is None else {t: z[s.T - t] for t in range(s.T, 1, -1)}
    return ancestral_steps(p, s, x_T, noise if noise is not None else {}, cfg.sigma)


_SAMPLE = re.compile(r"sample(\d+)$")


def save_samples(path, X, manifest: dict) -> None:
    """Archive with entries ``sample{i}`` plus a JSON ``manifest``."""
    entries = {f"sample{i}": np.asarray(x, dtype=np.float64) for i, x in enumerate(X)}
    entries["manifest"] = json_entry(manifest)
    archive_write(path, entries)


def load_samples(path):
    """Returns ``(X, indices, manifest)``; samples are ordered by their index."""
    entries = archive_read(path)
    manifest = read_json_entry(entries.pop("manifest")) if "manifest" in entries else {}
    found = []
    for name in entries:
        m = _SAMPLE.match(name)
        if m is None:
            raise InvalidArgument(f"{path}: unexpected entry {name!r}")
        found.append((int(m.group(1)), name))
    if not found:
        raise InvalidArgument(f"{path}: no sample entries")
    found.sort()
    X = np.stack([entries[name].astype(np.float64) for _, name in found])
    return X, [i for i, _ in found], manifest
