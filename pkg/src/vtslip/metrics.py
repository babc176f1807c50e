"""Confusion matrices and precision/recall/F1 with *stable* (label 1) as the positive class.

``confusion[i][j]`` counts windows whose true label is ``i`` and predicted label is
``j``; so ``tp = c[1][1]``, ``fp = c[0][1]``, ``fn = c[1][0]``, ``tn = c[0][0]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    # names of metrics whose denominator was zero (reported as 0.0)
    undefined: tuple[str, ...] = ()


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"label arrays differ in shape: {y_true.shape} vs {y_pred.shape}")
    cm = np.zeros((2, 2), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def compute_metrics(confusion) -> Metrics:
    cm = np.asarray(confusion)
    if cm.shape != (2, 2):
        raise ValidationError(f"confusion matrix must be 2x2, got {cm.shape}")
    if np.any(cm < 0):
        raise ValidationError("confusion counts must be non-negative")
    total = cm.sum()
    if total == 0:
        raise ValidationError("confusion matrix is empty")
    tn, fp, fn, tp = (float(v) for v in (cm[0, 0], cm[0, 1], cm[1, 0], cm[1, 1]))
    undefined = []
    precision = recall = 0.0
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        undefined.append("precision")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        undefined.append("recall")
    f1 = f1_score(precision, recall)
    if precision + recall == 0:
        undefined.append("f1")
    return Metrics(precision, recall, f1, (tp + tn) / total, tuple(undefined))


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class EvalReport:
    confusion: np.ndarray
    precision: float
    recall: float
    f1: float
    accuracy: float
    per_object: dict[str, float] = field(default_factory=dict)
    undefined: tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @classmethod
    def from_predictions(cls, y_true, y_pred, object_ids=None) -> EvalReport:
        cm = confusion_matrix(y_true, y_pred)
        m = compute_metrics(cm)
        per_object = {}
        if object_ids is not None:
            ids = np.asarray(object_ids)
            hits = np.asarray(y_true) == np.asarray(y_pred)
            for obj in sorted(set(ids.tolist())):
                per_object[obj] = float(hits[ids == obj].mean())
        return cls(cm, m.precision, m.recall, m.f1, m.accuracy, per_object, m.undefined)

    def as_row(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "accuracy": self.accuracy}
