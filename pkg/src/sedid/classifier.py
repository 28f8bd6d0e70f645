"""Neural detector over noise profiles.

The input for one sample is ``[x_tilde_t, x_recon, residual**2]`` flattened.
Inputs are standardised with statistics of the training split, stored in the
net as frozen ``input.mean`` / ``input.std``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .core import NoiseProfile, ProfileBatch
from .errors import InvalidArgument, TrainingDiverged
from .foundation import Rng, archive_read, archive_write, derive_seed, json_entry, read_json_entry

FROZEN = ("input.mean", "input.std")


def build_input(profile: NoiseProfile) -> np.ndarray:
    return np.concatenate([
        np.ravel(profile.x_tilde_t),
        np.ravel(profile.x_recon),
        np.ravel(profile.residual) ** 2,
    ])


def build_inputs(batch: ProfileBatch) -> np.ndarray:
    n = len(batch)
    return np.concatenate([
        batch.x_tilde_t.reshape(n, -1),
        batch.x_recon.reshape(n, -1),
        batch.residual.reshape(n, -1) ** 2,
    ], axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class ClassifierNet:
    def __init__(self, params: dict):
        self.params = params

    @classmethod
    def create(cls, d_in: int, hidden=(256, 64), rng: Rng | None = None) -> "ClassifierNet":
        params = nn.init_dense([d_in, *hidden, 2], rng or Rng(0))
        params["input.mean"] = np.zeros(d_in)
        params["input.std"] = np.ones(d_in)
        return cls(params)

    @classmethod
    def zeros(cls, d_in: int, hidden=(256, 64)) -> "ClassifierNet":
        net = cls.create(d_in, hidden)
        for k, v in net.params.items():
            if k not in FROZEN:
                v[...] = 0.0
        return net

    @property
    def d_in(self) -> int:
        return self.params["layer0.w"].shape[0]

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d_in:
            raise InvalidArgument(f"classifier expects inputs of length {self.d_in}, got {X.shape[1]}")
        return X

    def logits(self, X) -> np.ndarray:
        X = self._check(X)
        Z = (X - self.params["input.mean"]) / self.params["input.std"]
        return nn.dense_forward(self.params, Z)[0]

    def proba(self, X) -> np.ndarray:
        """P(generated) for each row of ``X``."""
        return softmax(self.logits(X))[:, 1]

    def loss_and_grads(self, X, y):
        """Mean cross-entropy of the 2-way softmax and its gradients."""
        X = self._check(X)
        y = np.asarray(y, dtype=np.int64)
        Z = (X - self.params["input.mean"]) / self.params["input.std"]
        out, cache = nn.dense_forward(self.params, Z)
        z = out - out.max(axis=1, keepdims=True)
        log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = X.shape[0]
        loss = float(-log_p[np.arange(n), y].mean())
        g = np.exp(log_p)
        g[np.arange(n), y] -= 1.0
        grads, _, _ = nn.dense_backward(self.params, cache, g / n)
        return loss, grads


@dataclass
class NnTrainConfig:
    epochs: int = 20
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 128
    train_fraction: float = 0.1
    seed: int = 0
    hidden: tuple = (256, 64)

    def __post_init__(self):
        if not 0 < self.train_fraction <= 1:
            raise InvalidArgument("train_fraction must lie in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0 or self.weight_decay < 0:
            raise InvalidArgument("epochs, batch_size, learning_rate and weight_decay must be valid")
        if not 0 <= self.momentum < 1:
            raise InvalidArgument("momentum must lie in [0, 1)")


def stratified_split(labels, fraction: float, seed: int):
    """Seeded split taking exactly floor(fraction * N) items for training.

    Each class contributes floor(fraction * n_class); leftover slots go to the
    classes with the largest fractional remainders (label order breaks ties).
    Returns sorted (train_idx, holdout_idx).
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_train = int(np.floor(fraction * labels.size))
    classes = np.unique(labels)
    quota = {c: fraction * int(np.sum(labels == c)) for c in classes}
    take = {c: int(np.floor(q)) for c, q in quota.items()}
    for c in sorted(classes, key=lambda c: (-(quota[c] - take[c]), c)):
        if sum(take.values()) >= n_train:
            break
        take[c] += 1
    rng = Rng(seed)
    train = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        train.append(idx[rng.spawn(int(c)).permutation(idx.size)[:take[c]]])
    train = np.sort(np.concatenate(train))
    holdout = np.setdiff1d(np.arange(labels.size), train)
    return train, holdout


def nn_train(X, y, cfg: NnTrainConfig, net: ClassifierNet | None = None):
    """Fit a classifier with SGD + momentum on cross-entropy.

    ``X``/``y`` are the training rows only. Returns ``(net, epoch_losses)``
    where ``epoch_losses[0]`` is the loss before any update.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise InvalidArgument("classifier training split needs both classes")
    if net is None:
        net = ClassifierNet.create(X.shape[1], cfg.hidden, Rng(derive_seed(cfg.seed, 0)))
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        net.params["input.mean"][...] = mean
        net.params["input.std"][...] = np.where(std > 0, std, 1.0)
    opt = nn.SGD(net.params, cfg.learning_rate, cfg.momentum, cfg.weight_decay, frozen=FROZEN)
    rng = Rng(derive_seed(cfg.seed, 1))
    losses = [net.loss_and_grads(X, y)[0]]
    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, X.shape[0], cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_grads(X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged("non-finite classifier loss", epoch)
            total += loss * idx.size
            opt.step(grads)
        losses.append(total / X.shape[0])
    return net, np.array(losses)


def nn_score(net: ClassifierNet, profile) -> float:
    """Probability that ``profile`` (a NoiseProfile or a built input vector) is generated."""
    x = build_input(profile) if isinstance(profile, NoiseProfile) else np.ravel(profile)
    return float(net.proba(x)[0])


def classifier_grad_check(net: ClassifierNet, X, y, h: float = 1e-5) -> float:
    _, grads = net.loss_and_grads(X, y)
    return nn.finite_difference_check(net.params, lambda: net.loss_and_grads(X, y)[0], grads, h,
                                      skip=FROZEN)


def save_classifier(path, net: ClassifierNet) -> None:
    entries = dict(sorted(net.params.items()))
    n = nn.n_layers(net.params)
    dims = [net.d_in] + [net.params[f"layer{i}.w"].shape[1] for i in range(n)]
    entries["manifest"] = json_entry({"kind": "classifier", "dims": dims, "activation": "silu"})
    archive_write(path, entries)


def load_classifier(path) -> ClassifierNet:
    entries = archive_read(path)
    meta = read_json_entry(entries.pop("manifest"))
    if meta.get("kind") != "classifier":
        raise InvalidArgument(f"{path}: not a classifier checkpoint")
    return ClassifierNet({k: v.astype(np.float64) for k, v in entries.items()})
