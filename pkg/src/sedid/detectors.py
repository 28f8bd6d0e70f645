"""Threshold detection on scalar scores, calibration, and the noise-loss baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateCalibration, InvalidArgument
from .foundation import Rng, l2_sq
from .schedule import NoiseSchedule, forward_sample

REAL, GENERATED = 0, 1
LESS = "generated_if_less"
GREATER = "generated_if_greater"
ORIENTATIONS = (LESS, GREATER)


@dataclass(frozen=True)
class ScoredSample:
    id: str
    score: float
    label: Optional[int] = None

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise InvalidArgument(f"sample {self.id}: score must be finite")
        if self.label not in (None, REAL, GENERATED):
            raise InvalidArgument(f"sample {self.id}: label must be 0, 1 or None")


@dataclass(frozen=True)
class Threshold:
    h: float
    orientation: str = LESS

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise InvalidArgument(f"unknown orientation {self.orientation!r}")

    def to_dict(self):
        return {"h": json_threshold(self.h), "orientation": self.orientation}


def json_threshold(h: float):
    """JSON has no infinities; the sentinel thresholds are written as "inf" / "-inf"."""
    return h if math.isfinite(h) else ("inf" if h > 0 else "-inf")


def classify(sample: ScoredSample, th: Threshold) -> int:
    """1 (generated) when the score falls strictly on the generated side of ``h``."""
    if th.orientation == LESS:
        return GENERATED if sample.score < th.h else REAL
    return GENERATED if sample.score > th.h else REAL


def scores_and_labels(samples: Sequence[ScoredSample]):
    scores = np.array([s.score for s in samples], dtype=np.float64)
    if any(s.label is None for s in samples):
        raise InvalidArgument("every sample needs a label")
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return scores, labels


def threshold_candidates(values: np.ndarray) -> np.ndarray:
    """-inf, midpoints of adjacent distinct sorted values, +inf."""
    mids = values[:-1] + (values[1:] - values[:-1]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def calibrate(samples: Sequence[ScoredSample]) -> tuple[Threshold, float]:
    """Accuracy-maximising threshold over all candidates and both orientations.

    Ties go to the smaller ``h``, then to ``generated_if_less``.
    """
    scores, labels = scores_and_labels(samples)
    return calibrate_arrays(scores, labels)


def calibrate_arrays(scores, labels) -> tuple[Threshold, float]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    n = labels.size
    if n_pos == 0 or n_pos == n:
        raise DegenerateCalibration("calibration needs both real and generated samples")
    order = np.argsort(scores, kind="stable")
    values, pos, neg = kernels.tie_groups(scores[order], labels[order])
    # candidate k sits above the first k groups
    pos_below = np.concatenate([[0], np.cumsum(pos)])
    neg_below = np.concatenate([[0], np.cumsum(neg)])
    n_neg = n - n_pos
    correct_less = pos_below + (n_neg - neg_below)
    correct_greater = (n_pos - pos_below) + neg_below
    both = np.stack([correct_less, correct_greater], axis=1).reshape(-1)
    best = int(np.argmax(both))
    k, o = divmod(best, 2)
    h = float(threshold_candidates(values)[k])
    return Threshold(h, ORIENTATIONS[o]), both[best] / n


def baseline_score(p, s: NoiseSchedule, x0, t: int, rng: Rng, cond=None) -> float:
    """||eps - eps_theta(x_t, t)||^2 for one fresh noise draw at timestep ``t``."""
    s.check_t(t, low=1)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = rng.normal(x0.shape)
    xt = forward_sample(s, x0, t, eps)
    return l2_sq(eps, p.eval(xt, t, cond))


def baseline_scores(p, s: NoiseSchedule, X, t: int, seed: int) -> np.ndarray:
    """Batched baseline; sample i draws its noise from ``Rng(seed).spawn(i)``."""
    X = np.asarray(X, dtype=np.float64)
    s.check_t(t, low=1)
    base = Rng(seed)
    eps = np.stack([base.spawn(i).normal(X.shape[1:]) for i in range(X.shape[0])])
    xt = forward_sample(s, X, t, eps)
    n = X.shape[0]
    return kernels.row_sq_dist(eps.reshape(n, -1), np.asarray(p.eval(xt, t)).reshape(n, -1))
