"""Noise predictors eps_theta(x, t, cond) and the DDPM training loop.

Predictors accept a single sample or a batch with one leading axis. The
analytic predictors act elementwise; :class:`MlpPredictor` knows its sample
shape and flattens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import InvalidArgument, TrainingDiverged, UndefinedTimestep
from .foundation import Rng, archive_read, archive_write, derive_seed, json_entry, read_json_entry
from .schedule import NoiseSchedule


class NoisePredictor:
    """Interface: ``eval(x, t, cond=None)`` returns an array shaped like ``x``.

    ``defines_t0`` tells the reverse step whether eps_theta(x, 0) may be
    queried; when False it falls back to t = 1.
    """

    defines_t0 = True

    def eval(self, x, t: int, cond=None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, t, cond=None):
        return self.eval(x, t, cond)


class ConstantPredictor(NoisePredictor):
    def __init__(self, c=0.0):
        self.c = np.asarray(c, dtype=np.float64)

    def eval(self, x, t, cond=None):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(self.c, x.shape).copy()


class LinearPredictor(NoisePredictor):
    def __init__(self, k: float):
        self.k = float(k)

    def eval(self, x, t, cond=None):
        return self.k * np.asarray(x, dtype=np.float64)


class PointMassPredictor(NoisePredictor):
    """Exact eps for data concentrated at ``x_star``: (x - sqrt(abar_t) x*) / sqrt(1 - abar_t)."""

    defines_t0 = False

    def __init__(self, x_star, schedule: NoiseSchedule):
        self.x_star = np.asarray(x_star, dtype=np.float64)
        self.schedule = schedule

    def eval(self, x, t, cond=None):
        if t == 0:
            raise UndefinedTimestep("point-mass predictor is singular at t=0 (alpha_bar = 1)")
        self.schedule.check_t(t, low=1)
        ab = self.schedule.alpha_bar[t]
        return (np.asarray(x, dtype=np.float64) - np.sqrt(ab) * self.x_star) / np.sqrt(1.0 - ab)


def sinusoidal_table(T: int, dim: int) -> np.ndarray:
    """(T + 1, dim) table; row t is [sin(t w_k), cos(t w_k)] with w_k = 10000^(-k/half)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    ang = np.arange(T + 1, dtype=np.float64)[:, None] * freqs[None, :]
    table = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    if dim % 2:
        table = np.concatenate([table, np.zeros((T + 1, 1))], axis=1)
    return table


class MlpPredictor(NoisePredictor):
    """Fully connected eps_theta over [flattened x, timestep embedding].

    An optional condition vector is projected by ``cond.w`` and added to the
    first hidden pre-activation. Only t in 1..T is seen in training, so
    ``defines_t0`` is False.
    """

    defines_t0 = False

    def __init__(self, params: dict, t_embed: np.ndarray, sample_shape, cond_dim: int = 0):
        self.params = params
        self.t_embed = np.asarray(t_embed, dtype=np.float64)
        self.sample_shape = tuple(int(d) for d in sample_shape)
        self.cond_dim = int(cond_dim)
        self.T = self.t_embed.shape[0] - 1
        dims = self.dims
        if dims[0] != self.sample_size + self.t_embed.shape[1] or dims[-1] != self.sample_size:
            raise InvalidArgument(f"layer dims {dims} do not fit sample shape {self.sample_shape}")

    @classmethod
    def create(cls, sample_shape, T: int, hidden=(128, 128), t_dim: int = 16, cond_dim: int = 0,
               rng: Rng | None = None) -> "MlpPredictor":
        rng = rng or Rng(0)
        size = int(np.prod(sample_shape))
        params = nn.init_dense([size + t_dim, *hidden, size], rng)
        if cond_dim:
            bound = 1.0 / np.sqrt(cond_dim)
            params["cond.w"] = ((2.0 * rng.uniform(cond_dim * hidden[0]) - 1.0) * bound).reshape(
                cond_dim, hidden[0])
        return cls(params, sinusoidal_table(T, t_dim), sample_shape, cond_dim)

    @property
    def sample_size(self) -> int:
        return int(np.prod(self.sample_shape))

    @property
    def dims(self) -> list[int]:
        n = nn.n_layers(self.params)
        return [self.params["layer0.w"].shape[0]] + [self.params[f"layer{i}.w"].shape[1] for i in range(n)]

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def _inputs(self, x_flat, t, cond):
        n = x_flat.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.int64), (n,))
        if np.any(t < 0) or np.any(t > self.T):
            raise InvalidArgument(f"timestep outside [0, {self.T}]")
        inp = np.concatenate([x_flat, self.t_embed[t]], axis=1)
        extra = None
        if self.cond_dim:
            if cond is None:
                raise InvalidArgument("this predictor requires a condition vector")
            c = np.broadcast_to(np.asarray(cond, dtype=np.float64), (n, self.cond_dim))
            extra = c @ self.params["cond.w"]
        elif cond is not None:
            raise InvalidArgument("predictor was built without a condition projection")
        return inp, extra

    def _split(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.sample_shape:
            return x.reshape(1, -1), False
        if x.shape[1:] == self.sample_shape:
            return x.reshape(x.shape[0], -1), True
        raise InvalidArgument(f"input shape {x.shape} does not match sample shape {self.sample_shape}")

    def eval(self, x, t, cond=None):
        flat, batched = self._split(x)
        inp, extra = self._inputs(flat, t, cond)
        out, _ = nn.dense_forward(self.params, inp, extra)
        return out.reshape(x.shape if batched else self.sample_shape)

    def loss_and_grads(self, x_flat, t, eps, cond=None):
        """Batch DDPM loss mean_i ||eps_i - eps_theta(x_i, t_i)||^2 and its parameter gradients."""
        inp, extra = self._inputs(x_flat, t, cond)
        out, cache = nn.dense_forward(self.params, inp, extra)
        diff = out - eps
        n = x_flat.shape[0]
        loss = float(np.sum(diff * diff) / n)
        grads, _, g_first = nn.dense_backward(self.params, cache, (2.0 / n) * diff)
        if self.cond_dim:
            c = np.broadcast_to(np.asarray(cond, dtype=np.float64), (n, self.cond_dim))
            grads["cond.w"] = c.T @ g_first
        return loss, grads

    def copy(self) -> "MlpPredictor":
        return MlpPredictor({k: v.copy() for k, v in self.params.items()}, self.t_embed.copy(),
                            self.sample_shape, self.cond_dim)


@dataclass
class TrainConfig:
    steps: int = 20000
    batch_size: int = 128
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    hidden: tuple = (128, 128)
    t_dim: int = 16

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise InvalidArgument("steps must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise InvalidArgument("learning_rate and weight_decay must be nonnegative")
        if not 0 <= self.momentum < 1:
            raise InvalidArgument("momentum must lie in [0, 1)")


def ddpm_train(schedule: NoiseSchedule, data, cfg: TrainConfig, model: MlpPredictor | None = None,
               conds=None):
    """Train an :class:`MlpPredictor` on the DDPM noise-prediction loss.

    Each step draws a batch of examples, timesteps uniform on 1..T and fresh
    Gaussian noise from the stream seeded by ``cfg.seed``. Returns
    ``(model, losses)`` with one loss per step.
    """
    data = [np.asarray(d, dtype=np.float64) for d in data]
    if not data:
        raise InvalidArgument("training data is empty")
    shape = data[0].shape
    if any(d.shape != shape for d in data):
        raise InvalidArgument("training samples must share one shape")
    X = np.stack([d.reshape(-1) for d in data])
    C = None if conds is None else np.stack([np.asarray(c, dtype=np.float64) for c in conds])
    if model is None:
        model = MlpPredictor.create(shape, schedule.T, cfg.hidden, cfg.t_dim,
                                    0 if C is None else C.shape[1], Rng(derive_seed(cfg.seed, 0)))
    rng = Rng(derive_seed(cfg.seed, 1))
    opt = nn.SGD(model.params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    sab = np.sqrt(schedule.alpha_bar)
    s1ab = np.sqrt(1.0 - schedule.alpha_bar)
    losses = np.empty(cfg.steps)
    b = cfg.batch_size
    for step in range(cfg.steps):
        idx = rng.integers(0, X.shape[0], b)
        t = rng.integers(1, schedule.T + 1, b)
        eps = rng.normal((b, X.shape[1]))
        xt = sab[t, None] * X[idx] + s1ab[t, None] * eps
        loss, grads = model.loss_and_grads(xt, t, eps, None if C is None else C[idx])
        if not np.isfinite(loss):
            raise TrainingDiverged("non-finite DDPM loss", step)
        losses[step] = loss
        opt.step(grads)
    return model, losses


def grad_check(p: MlpPredictor, x, t, eps_target, cond=None, h: float = 1e-5) -> float:
    """Max relative error of backprop against central differences of the DDPM loss."""
    flat, _ = p._split(x)
    eps = np.asarray(eps_target, dtype=np.float64).reshape(flat.shape)
    _, grads = p.loss_and_grads(flat, t, eps, cond)
    return nn.finite_difference_check(
        p.params, lambda: p.loss_and_grads(flat, t, eps, cond)[0], grads, h)


def save_checkpoint(path, model: MlpPredictor, schedule: NoiseSchedule) -> None:
    entries = dict(sorted(model.params.items()))
    entries["t_embed"] = model.t_embed
    entries["beta"] = schedule.beta[1:].copy()
    entries["manifest"] = json_entry({
        "kind": "mlp_predictor",
        "dims": model.dims,
        "T": schedule.T,
        "beta_start": schedule.beta_start,
        "beta_end": schedule.beta_end,
        "sample_shape": list(model.sample_shape),
        "cond_dim": model.cond_dim,
        "activation": "silu",
    })
    archive_write(path, entries)


def load_checkpoint(path):
    """Returns ``(model, schedule)`` from a checkpoint archive."""
    entries = archive_read(path)
    meta = read_json_entry(entries.pop("manifest"))
    if meta.get("kind") != "mlp_predictor":
        raise InvalidArgument(f"{path}: not a predictor checkpoint")
    betas = entries.pop("beta")
    schedule = NoiseSchedule.from_betas(betas, meta["beta_start"], meta["beta_end"])
    t_embed = entries.pop("t_embed")
    params = {k: v.astype(np.float64) for k, v in entries.items()}
    model = MlpPredictor(params, t_embed, meta["sample_shape"], meta["cond_dim"])
    if model.dims != meta["dims"] or schedule.T != meta["T"]:
        raise InvalidArgument(f"{path}: manifest disagrees with stored tensors")
    return model, schedule


def model_checksum(model: MlpPredictor) -> str:
    import hashlib

    h = hashlib.sha256()
    for k in sorted(model.params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(model.params[k]).tobytes())
    return h.hexdigest()[:16]


__all__ = [
    "NoisePredictor", "ConstantPredictor", "LinearPredictor", "PointMassPredictor", "MlpPredictor",
    "TrainConfig", "ddpm_train", "grad_check", "save_checkpoint", "load_checkpoint",
    "sinusoidal_table", "model_checksum",
]
