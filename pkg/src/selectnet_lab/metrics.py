"""Confusion matrices, per-class scores and selection-category counts.

This is the only module allowed to read the pool's hidden labels.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import UnlabeledPool
from .errors import InputError, UsageError


@dataclass(frozen=True)
class PerClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float

    @property
    def num_classes(self) -> int:
        return self.recall.size

    def mean_recall(self, classes: Iterable[int]) -> float:
        return float(np.mean([self.recall[c] for c in classes]))


@dataclass(frozen=True)
class SelectionCounts:
    labeled_confused: int = 0
    labeled_minor: int = 0
    unlabeled_confused: int = 0
    unlabeled_minor: int = 0

    @property
    def total(self) -> int:
        return self.labeled_confused + self.labeled_minor + self.unlabeled_confused + self.unlabeled_minor

    def as_dict(self) -> dict:
        return asdict(self)


CATEGORIES = ("labeled_confused", "labeled_minor", "unlabeled_confused", "unlabeled_minor")


def pool_ground_truth(pool: UnlabeledPool) -> np.ndarray:
    return pool._hidden_labels


def confusion(true_labels, predicted_labels, m: int) -> np.ndarray:
    """Counts with rows = true class and columns = predicted class."""
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.size != p.size:
        raise InputError("true and predicted label vectors differ in length")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= m):
            raise InputError(f"{name} label outside [0, {m})")
    return np.bincount(t * m + p, minlength=m * m).reshape(m, m)


def _safe_div(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def per_class_metrics(cm) -> PerClassMetrics:
    # undefined ratios (empty row or column) are reported as 0
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    total = cm.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    return PerClassMetrics(precision, recall, f1, cm.sum(axis=1).astype(np.int64), accuracy)


def evaluate(true_labels, predicted_labels, m: int) -> PerClassMetrics:
    return per_class_metrics(confusion(true_labels, predicted_labels, m))


def selection_counts(
    decisions: Sequence,
    true_labels_for_labeled,
    hidden_labels_for_pool,
    classifier_predictions=None,
) -> SelectionCounts:
    """Sort each decision into one of the four selection categories.

    ``classifier_predictions`` maps a decision to the classifier's top-1 class
    at selection time. It defaults to each decision's ``predicted_label``.
    Pool decisions are judged on their assigned pseudo-label.
    """
    counts = dict.fromkeys(CATEGORIES, 0)
    true_labeled = np.asarray(true_labels_for_labeled)
    hidden = np.asarray(hidden_labels_for_pool)
    for k, d in enumerate(decisions):
        pred = d.predicted_label if classifier_predictions is None else classifier_predictions[k]
        try:
            if d.source == "labeled":
                truth = true_labeled[d.index]
                counts["labeled_confused" if pred != truth else "labeled_minor"] += 1
            elif d.source == "unlabeled":
                truth = hidden[d.index]
                counts["unlabeled_confused" if d.assigned_label != truth else "unlabeled_minor"] += 1
            else:
                raise UsageError(f"unknown decision source {d.source!r}")
        except IndexError as exc:
            raise UsageError(f"decision {d} has no ground truth") from exc
    return SelectionCounts(**counts)


def selection_counts_for_pool(decisions, labeled_labels, pool: UnlabeledPool) -> SelectionCounts:
    return selection_counts(decisions, labeled_labels, pool_ground_truth(pool))
