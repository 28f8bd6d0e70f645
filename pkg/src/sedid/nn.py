"""Fully connected networks with hand-written backprop, plus SGD with momentum.

Parameters live in flat ``dict[str, ndarray]`` maps with keys
``layer{i}.w`` / ``layer{i}.b`` so they drop straight into tensor archives.
Hidden layers use SiLU; the output layer is linear.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import expit

from .foundation import Rng


def silu(z):
    return z * expit(z)


def silu_grad(z):
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


def init_dense(dims: list[int], rng: Rng, prefix: str = "layer") -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for a stack of dense layers."""
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = (2.0 * rng.uniform(fan_in * fan_out) - 1.0) * bound
        b = (2.0 * rng.uniform(fan_out) - 1.0) * bound
        params[f"{prefix}{i}.w"] = w.reshape(fan_in, fan_out)
        params[f"{prefix}{i}.b"] = b
    return params


def n_layers(params: dict, prefix: str = "layer") -> int:
    n = 0
    while f"{prefix}{n}.w" in params:
        n += 1
    return n


def dense_forward(params, h, first_extra=None, prefix="layer"):
    """Forward pass over a batch ``h`` of shape (N, d_in).

    ``first_extra`` is added to the first layer's pre-activation (used for
    conditioning). Returns the output and a cache for :func:`dense_backward`.
    """
    n = n_layers(params, prefix)
    cache = []
    for i in range(n):
        z = h @ params[f"{prefix}{i}.w"] + params[f"{prefix}{i}.b"]
        if i == 0 and first_extra is not None:
            z = z + first_extra
        cache.append((h, z))
        h = silu(z) if i < n - 1 else z
    return h, cache


def dense_backward(params, cache, g_out, prefix="layer"):
    """Backprop ``g_out`` (dL/d output). Returns (grads, dL/d input, dL/d first pre-activation)."""
    n = len(cache)
    grads = {}
    g = g_out
    g_first = None
    for i in range(n - 1, -1, -1):
        h, z = cache[i]
        if i < n - 1:
            g = g * silu_grad(z)
        if i == 0:
            g_first = g
        grads[f"{prefix}{i}.w"] = h.T @ g
        grads[f"{prefix}{i}.b"] = g.sum(axis=0)
        g = g @ params[f"{prefix}{i}.w"].T
    return grads, g, g_first


class SGD:
    """SGD with classical momentum; weight decay enters as an L2 term in the gradient.

    ``v <- momentum * v + (g + wd * p)``; ``p <- p - lr * v``.
    """

    def __init__(self, params: dict, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
                 frozen: tuple = ()):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.frozen = set(frozen)
        self.velocity = {k: np.zeros_like(v) for k, v in params.items() if k not in self.frozen}

    def step(self, grads: dict) -> None:
        for k, v in self.velocity.items():
            p = self.params[k]
            g = grads[k] + self.weight_decay * p if self.weight_decay else grads[k]
            v *= self.momentum
            v += g
            p -= self.lr * v


def finite_difference_check(params: dict, loss_fn: Callable[[], float], grads: dict,
                            h: float = 1e-5, skip: tuple = ()) -> float:
    """Max relative error between ``grads`` and central differences of ``loss_fn``.

    Relative error per entry is |a - c| / max(|a|, |c|, 1e-8). ``loss_fn`` must
    read the (mutated in place) ``params``.
    """
    worst = 0.0
    for name, p in params.items():
        if name in skip:
            continue
        flat = p.reshape(-1)
        ga = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            cd = (up - down) / (2 * h)
            denom = max(abs(ga[i]), abs(cd), 1e-8)
            worst = max(worst, abs(ga[i] - cd) / denom)
    return worst
