"""Confusion-matrix based segmentation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClassTable
from .errors import EmptyStatisticsError, LabelValueError, ShapeMismatchError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are ground-truth classes, columns are predicted classes."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(gt: np.ndarray, pred: np.ndarray, table: ClassTable) -> ConfusionMatrix:
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ShapeMismatchError(f"ground truth {gt.shape} and prediction {pred.shape} differ")
    n = table.num_classes
    bad_pred = pred >= n
    if bad_pred.any():
        r, c = np.argwhere(bad_pred)[0]
        raise LabelValueError(
            f"prediction holds {int(pred[r, c])} at pixel {(int(r), int(c))}; "
            "predictions must be class ids", pixel=(int(r), int(c)), value=int(pred[r, c]))
    keep = gt != table.ignore_id
    g = gt[keep].astype(np.int64)
    if g.size and g.max() >= n:
        raise LabelValueError(f"ground truth value {int(g.max())} is not in the class table")
    idx = g * n + pred[keep].astype(np.int64)
    return ConfusionMatrix(np.bincount(idx, minlength=n * n).reshape(n, n).astype(np.int64))


def accumulate(cm: ConfusionMatrix, gt: np.ndarray, pred: np.ndarray,
               table: ClassTable) -> ConfusionMatrix:
    return cm + confusion(gt, pred, table)


def iou_per_class(cm: ConfusionMatrix) -> np.ndarray:
    """Per-class IoU; NaN where the class has an empty union."""
    tp = np.diag(cm.counts)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - tp
    out = np.full(cm.num_classes, np.nan)
    defined = union > 0
    out[defined] = tp[defined] / union[defined]
    return out


def miou_and_acc(cm: ConfusionMatrix) -> tuple[float, float]:
    total = cm.total
    if total == 0:
        raise EmptyStatisticsError("confusion matrix is empty")
    iou = iou_per_class(cm)
    defined = [float(v) for v in iou if not math.isnan(v)]
    miou = math.fsum(defined) / len(defined)
    acc = int(np.trace(cm.counts)) / total
    return miou, acc
