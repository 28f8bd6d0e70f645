"""Rank AUC, ROC curves, TPR at a fixed FPR, and the combined report.

Positives are generated samples (label 1). The orientation says which side
of a threshold counts as generated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .detectors import GREATER, LESS, ORIENTATIONS, calibrate_arrays, json_threshold, scores_and_labels
from .errors import InvalidArgument, UndefinedMetric

FPR_TARGETS = (0.01, 0.001)


def _prepare(scores, labels, orientation):
    if orientation not in ORIENTATIONS:
        raise InvalidArgument(f"unknown orientation {orientation!r}")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetric("metric needs both real and generated samples")
    # walk from the most generated-looking score to the least
    key = scores if orientation == LESS else -scores
    order = np.argsort(key, kind="stable")
    _, pos, neg = kernels.tie_groups(key[order], labels[order])
    return pos, neg, n_pos, labels.size - n_pos


def _pairs(pos, neg):
    """Count of (pos, neg) pairs with pos strictly more generated-looking, ties as 1/2, doubled."""
    neg_after = neg.sum() - np.cumsum(neg)
    return int(np.sum(2 * pos * neg_after + pos * neg))


def auc_arrays(scores, labels, orientation=LESS) -> float:
    pos, neg, n_pos, n_neg = _prepare(scores, labels, orientation)
    return (_pairs(pos, neg) / 2) / (n_pos * n_neg)


def auc(samples, positive_if=LESS) -> float:
    """Mann-Whitney AUC: P(generated score is on the generated side of a real one), ties 1/2."""
    scores, labels = scores_and_labels(samples)
    return auc_arrays(scores, labels, positive_if)


def roc_arrays(scores, labels, orientation=LESS) -> list[tuple[float, float]]:
    pos, neg, n_pos, n_neg = _prepare(scores, labels, orientation)
    tp = np.concatenate([[0], np.cumsum(pos)])
    fp = np.concatenate([[0], np.cumsum(neg)])
    return list(zip((fp / n_neg).tolist(), (tp / n_pos).tolist()))


def roc_curve(samples, orientation=LESS) -> list[tuple[float, float]]:
    """(fpr, tpr) after admitting each distinct score, starting at (0, 0) and ending at (1, 1)."""
    scores, labels = scores_and_labels(samples)
    return roc_arrays(scores, labels, orientation)


def trapezoid(points) -> float:
    x = np.array([p[0] for p in points])
    y = np.array([p[1] for p in points])
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def tpr_at_fpr_arrays(scores, labels, target_fpr: float, orientation=LESS) -> float:
    if not 0 < target_fpr < 1:
        raise InvalidArgument(f"target FPR must lie in (0, 1), got {target_fpr}")
    pos, neg, n_pos, n_neg = _prepare(scores, labels, orientation)
    tp = np.concatenate([[0], np.cumsum(pos)])
    fp = np.concatenate([[0], np.cumsum(neg)])
    ok = fp / n_neg <= target_fpr
    return float(tp[ok].max() / n_pos)


def tpr_at_fpr(samples, target_fpr: float, orientation=LESS) -> float:
    """Best TPR over operating points with empirical FPR <= target (no interpolation)."""
    scores, labels = scores_and_labels(samples)
    return tpr_at_fpr_arrays(scores, labels, target_fpr, orientation)


@dataclass
class MetricsReport:
    auc: float
    auc_raw: float
    best_acc: float
    orientation: str
    threshold: float
    tpr_at_fpr: dict = field(default_factory=dict)
    roc: list = field(default_factory=list)
    n_real: int = 0
    n_generated: int = 0

    def to_dict(self, with_roc: bool = False) -> dict:
        d = {
            "auc": self.auc,
            "auc_raw": self.auc_raw,
            "best_acc": self.best_acc,
            "orientation": self.orientation,
            "h": json_threshold(self.threshold),
            "tpr_at_fpr": {str(k): v for k, v in self.tpr_at_fpr.items()},
            "n_real": self.n_real,
            "n_generated": self.n_generated,
        }
        if with_roc:
            d["roc"] = [list(p) for p in self.roc]
        return d


def evaluate(scores, labels, orientation: str | None = None) -> MetricsReport:
    """Full report. The orientation defaults to the one picked by best-accuracy calibration;
    ``auc_raw`` is always the ``generated_if_less`` AUC."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    th, acc = calibrate_arrays(scores, labels)
    orientation = orientation or th.orientation
    n_pos = int(labels.sum())
    return MetricsReport(
        auc=auc_arrays(scores, labels, orientation),
        auc_raw=auc_arrays(scores, labels, LESS),
        best_acc=float(acc),
        orientation=orientation,
        threshold=th.h,
        tpr_at_fpr={f: tpr_at_fpr_arrays(scores, labels, f, orientation) for f in FPR_TARGETS},
        roc=roc_arrays(scores, labels, orientation),
        n_real=labels.size - n_pos,
        n_generated=n_pos,
    )


__all__ = ["auc", "auc_arrays", "roc_curve", "roc_arrays", "tpr_at_fpr", "tpr_at_fpr_arrays",
           "trapezoid", "evaluate", "MetricsReport", "LESS", "GREATER", "FPR_TARGETS"]
