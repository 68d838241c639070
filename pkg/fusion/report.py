"""
EvalReport: pooled and per-fold metrics, confidence intervals, the weight
sweep, ROC points and subgroup tables of one cross-validated evaluation.
Written as sorted-key JSON plus a ROC point CSV; neither carries timestamps.
"""
from __future__ import annotations

import functools
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import pandas as pd

from fusion.bootstrap import bootstrap_ci
from fusion.folds import FoldSplit
from fusion.fuse import TEXT_ONLY_WEIGHT, fused_scores
from fusion.metrics import METRIC_FUNCTIONS, RocCurve, compute_metrics, roc_auc
from fusion.predictions import SubjectPrediction, labels_of
from fusion.subgroups import SubgroupReport, subgroup_report
from fusion.sweep import best_weight, weight_sweep

logger = logging.getLogger(__name__)

CI_METRICS = ("accuracy", "f1", "specificity", "sensitivity", "auc")


@dataclass
class FoldReport:
    index: int
    n_test: int
    metrics: dict[str, Any]
    auc: float | None
    roc: RocCurve | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "fold": self.index,
            "n_test": self.n_test,
            "metrics": self.metrics,
            "auc": self.auc,
            "roc": None if self.roc is None else [list(p) for p in self.roc.points()],
        }


@dataclass
class EvalReport:
    weights: list[float]
    best_weight: float
    threshold: float
    pooled: dict[str, Any]
    pooled_auc: float | None
    confidence_intervals: dict[str, list[float | None]]
    sweep: pd.DataFrame
    audio_only: dict[str, Any] | None
    text_only: dict[str, Any] | None
    folds: list[FoldReport]
    subgroups: SubgroupReport
    meta: dict[str, Any] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def max_fold_accuracy(self) -> float | None:
        accs = [f.metrics["accuracy"] for f in self.folds if f.n_test]
        return max(accs) if accs else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "meta": self.meta,
            "weights": self.weights,
            "best_weight": self.best_weight,
            "threshold": self.threshold,
            "pooled": self.pooled,
            "pooled_auc": self.pooled_auc,
            "confidence_intervals": self.confidence_intervals,
            "sweep": _records(self.sweep),
            "audio_only": self.audio_only,
            "text_only": self.text_only,
            "max_fold_accuracy": self.max_fold_accuracy,
            "folds": [f.to_dict() for f in self.folds],
            "subgroups": {
                "age": _records(self.subgroups.age),
                "gender": _records(self.subgroups.gender),
                "excluded_from_age": list(self.subgroups.excluded),
            },
            "diagnostics": self.diagnostics,
        }


def _clean(value: Any) -> Any:
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


def _records(df: pd.DataFrame) -> list[dict[str, Any]]:
    return [_clean(r) for r in df.astype(object).where(df.notna(), None).to_dict("records")]


def build_report(
    predictions: Sequence[SubjectPrediction],
    folds: Sequence[FoldSplit],
    weights: Sequence[float],
    threshold: float = 0.5,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    meta: dict[str, Any] | None = None,
) -> EvalReport:
    """Pooled out-of-fold predictions -> report at the best weight."""
    diagnostics: list[str] = []
    labels = labels_of(predictions)
    sweep = weight_sweep(predictions, weights, threshold)
    w = best_weight(sweep)
    scores = fused_scores(predictions, w)
    pooled = compute_metrics(labels, scores, threshold)

    try:
        pooled_auc: float | None = roc_auc(labels, scores).auc
    except ValueError as exc:
        pooled_auc = None
        diagnostics.append(str(exc))

    cis = {}
    for name in CI_METRICS:
        fn = functools.partial(METRIC_FUNCTIONS[name], threshold=threshold)
        ci = bootstrap_ci(fn, labels, scores, n=n_boot, level=level, seed=seed)
        if ci.skipped:
            diagnostics.append(f"bootstrap {name}: {ci.skipped} resamples skipped")
        cis[name] = ci.as_list()

    by_id = {p.subject_id: i for i, p in enumerate(predictions)}
    fold_reports = []
    for fold in folds:
        idx = [by_id[s] for s in fold.test_ids if s in by_id]
        if not idx:
            fold_reports.append(FoldReport(fold.index, 0, {}, None, None))
            continue
        y, s = labels[idx], scores[idx]
        roc = roc_auc(y, s) if len(set(y.tolist())) == 2 else None
        if roc is None:
            diagnostics.append(f"fold {fold.index}: single class, no ROC")
        fold_reports.append(FoldReport(
            fold.index, len(idx), compute_metrics(y, s, threshold).as_dict(),
            None if roc is None else roc.auc, roc,
        ))

    audio_only = compute_metrics(labels, fused_scores(predictions, 0.0), threshold).as_dict()
    text_only = compute_metrics(labels, fused_scores(predictions, TEXT_ONLY_WEIGHT), threshold).as_dict()
    logger.info(
        "[Report] best w=%g pooled acc=%.4f (audio-only %.4f, text-only %.4f)",
        w, pooled.accuracy, audio_only["accuracy"], text_only["accuracy"],
    )
    return EvalReport(
        weights=[float(x) for x in weights],
        best_weight=w,
        threshold=threshold,
        pooled=pooled.as_dict(),
        pooled_auc=pooled_auc,
        confidence_intervals=cis,
        sweep=sweep,
        audio_only=audio_only,
        text_only=text_only,
        folds=fold_reports,
        subgroups=subgroup_report(predictions, w, threshold, n_boot, level, seed),
        meta=dict(meta or {}),
        diagnostics=diagnostics,
    )


def write_report_json(path: str | os.PathLike, report: EvalReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(report.to_dict()), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def roc_frame(report: EvalReport) -> pd.DataFrame:
    rows = [
        {"fold": f.index, "fpr": fpr, "tpr": tpr, "threshold": thr}
        for f in report.folds if f.roc is not None
        for fpr, tpr, thr in f.roc.points()
    ]
    return pd.DataFrame(rows, columns=["fold", "fpr", "tpr", "threshold"])


def write_roc_csv(path: str | os.PathLike, report: EvalReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    roc_frame(report).to_csv(path, index=False, float_format="%.10g")
    return path
