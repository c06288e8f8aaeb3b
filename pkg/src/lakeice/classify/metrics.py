"""Confusion-matrix metrics: recall, precision, IoU, overall accuracy and mean IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError


def _ratio(num: float, den: float):
    return None if den == 0 else num / den


@dataclass(frozen=True)
class Metrics:
    """Per-class ratios are ``None`` where the denominator is zero."""

    recall: tuple
    precision: tuple
    iou: tuple
    overall_accuracy: float
    mean_iou: float | None
    iou_incomplete: bool

    def to_dict(self) -> dict:
        return {"recall": list(self.recall), "precision": list(self.precision), "iou": list(self.iou),
                "overall_accuracy": self.overall_accuracy, "mean_iou": self.mean_iou,
                "iou_incomplete": self.iou_incomplete}


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with true classes on rows and predicted classes on columns."""
    t = np.asarray(y_true, dtype=int).ravel()
    p = np.asarray(y_pred, dtype=int).ravel()
    if t.shape != p.shape:
        raise ValidationError("y_true and y_pred differ in length")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n_classes):
        raise ValidationError(f"class index outside 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def metrics(confusion) -> Metrics:
    """Metrics of a square confusion matrix (rows true, columns predicted).

    Recall is ``TP / (TP + FN)``, precision ``TP / (TP + FP)`` and IoU
    ``TP / (TP + FP + FN)``. Classes with an undefined IoU are left out of
    the mean and flagged through ``iou_incomplete``.
    """
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValidationError("confusion matrix must be square")
    if (cm < 0).any():
        raise ValidationError("confusion counts must be non-negative")
    total = cm.sum()
    if total == 0:
        raise ValidationError("confusion matrix is empty")
    tp = np.diag(cm)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    recall = tuple(_ratio(int(a), int(a + b)) for a, b in zip(tp, fn))
    precision = tuple(_ratio(int(a), int(a + b)) for a, b in zip(tp, fp))
    iou = tuple(_ratio(int(a), int(a + b + c)) for a, b, c in zip(tp, fp, fn))
    defined = [v for v in iou if v is not None]
    return Metrics(recall, precision, iou, int(tp.sum()) / int(total),
                   float(np.mean(defined)) if defined else None, len(defined) < len(iou))
