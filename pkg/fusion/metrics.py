"""
Confusion-matrix metrics and ROC/AUC, AD being the positive class.

A metric whose denominator is empty (sensitivity without AD subjects,
specificity without HC subjects) is reported as None rather than 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt
from sklearn.metrics import auc as sk_auc
from sklearn.metrics import confusion_matrix, roc_curve


@dataclass(frozen=True)
class Metrics:
    n: int
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    f1: float | None
    specificity: float | None
    sensitivity: float | None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def confusion(labels: npt.ArrayLike, predicted: npt.ArrayLike) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn)"""
    tn, fp, fn, tp = confusion_matrix(labels, predicted, labels=[0, 1]).ravel()
    return int(tp), int(fp), int(fn), int(tn)


def compute_metrics(labels: npt.ArrayLike, scores: npt.ArrayLike, threshold: float = 0.5) -> Metrics:
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot compute metrics on an empty prediction set")
    if y.shape != s.shape:
        raise ValueError(f"{y.size} labels but {s.size} scores")
    tp, fp, fn, tn = confusion(y, (s >= threshold).astype(np.int64))
    return Metrics(
        n=int(y.size), tp=tp, fp=fp, fn=fn, tn=tn,
        accuracy=(tp + tn) / y.size,
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        specificity=_ratio(tn, tn + fp),
        sensitivity=_ratio(tp, tp + fn),
    )


def roc_auc(labels: npt.ArrayLike, scores: npt.ArrayLike) -> RocCurve:
    """ROC at every unique score (tied scores enter together) from (0,0) to (1,1); trapezoidal AUC."""
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if np.sum(y == 1) == 0 or np.sum(y == 0) == 0:
        raise ValueError("ROC needs both AD and HC subjects")
    fpr, tpr, thresholds = roc_curve(y, s, pos_label=1, drop_intermediate=False)
    # max(score) + 1 before scikit-learn 1.3
    thresholds = thresholds.astype(np.float64)
    thresholds[0] = np.inf
    return RocCurve(fpr, tpr, thresholds, float(sk_auc(fpr, tpr)))


# metric functions over (labels, scores), used by the bootstrap and subgroup tables

def accuracy(labels: Sequence[int], scores: Sequence[float], threshold: float = 0.5) -> float | None:
    return compute_metrics(labels, scores, threshold).accuracy


def f1(labels: Sequence[int], scores: Sequence[float], threshold: float = 0.5) -> float | None:
    return compute_metrics(labels, scores, threshold).f1


def sensitivity(labels: Sequence[int], scores: Sequence[float], threshold: float = 0.5) -> float | None:
    return compute_metrics(labels, scores, threshold).sensitivity


def specificity(labels: Sequence[int], scores: Sequence[float], threshold: float = 0.5) -> float | None:
    return compute_metrics(labels, scores, threshold).specificity


def auc(labels: Sequence[int], scores: Sequence[float], threshold: float = 0.5) -> float | None:
    y = np.asarray(labels)
    if len(np.unique(y)) < 2:
        return None
    return roc_auc(y, scores).auc


METRIC_FUNCTIONS = {
    "accuracy": accuracy,
    "f1": f1,
    "sensitivity": sensitivity,
    "specificity": specificity,
    "auc": auc,
}
