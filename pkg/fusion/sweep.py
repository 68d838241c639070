"""Metrics across fusion weights, alone and as a variant grid."""
from __future__ import annotations

import logging
from typing import Mapping, Sequence

import pandas as pd

from fusion.fuse import fused_scores
from fusion.metrics import compute_metrics
from fusion.predictions import SubjectPrediction, labels_of

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["weight", "accuracy", "f1", "specificity", "sensitivity"]


def weight_sweep(
    predictions: Sequence[SubjectPrediction],
    weights: Sequence[float],
    threshold: float = 0.5,
) -> pd.DataFrame:
    """One row per weight, in the order given."""
    incomplete = [p.subject_id for p in predictions if p.p_a is None or p.p_t is None]
    if incomplete:
        raise ValueError(f"weight sweep needs p_a and p_t for every subject; missing for {incomplete[:5]}")
    labels = labels_of(predictions)
    rows = []
    for w in weights:
        m = compute_metrics(labels, fused_scores(predictions, w), threshold)
        rows.append({
            "weight": float(w), "accuracy": m.accuracy, "f1": m.f1,
            "specificity": m.specificity, "sensitivity": m.sensitivity,
        })
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def best_weight(table: pd.DataFrame) -> float:
    """Highest accuracy; ties go to the earlier row."""
    return float(table["weight"].iloc[int(table["accuracy"].to_numpy().argmax())])


def sweep_grid(
    variants: Mapping[tuple[str, str], Sequence[SubjectPrediction]],
    weights: Sequence[float],
    threshold: float = 0.5,
) -> pd.DataFrame:
    """Long table (source, segment, weight, accuracy, f1, best) over (source, segment) variants."""
    frames = []
    for (source, segment), preds in variants.items():
        table = weight_sweep(preds, weights, threshold)
        table.insert(0, "segment", segment)
        table.insert(0, "source", source)
        table["best"] = table["weight"] == best_weight(table)
        frames.append(table)
    if not frames:
        return pd.DataFrame(columns=["source", "segment"] + SWEEP_COLUMNS + ["best"])
    return pd.concat(frames, ignore_index=True)


def format_grid(grid: pd.DataFrame) -> str:
    """Rows source x w, columns segment x {Acc, F1}; the best row of a variant is starred."""
    shown = grid.copy()
    shown["Acc"] = [f"{a:.3f}{'*' if b else ''}" for a, b in zip(shown["accuracy"], shown["best"])]
    shown["F1"] = ["-" if pd.isna(f) else f"{f:.3f}" for f in shown["f1"]]
    shown["w"] = [f"{w:g}" for w in shown["weight"]]
    wide = shown.pivot_table(
        index=["source", "w"], columns="segment", values=["Acc", "F1"], aggfunc="first", sort=False
    )
    wide = wide.swaplevel(0, 1, axis=1).sort_index(axis=1, level=0, sort_remaining=False)
    return wide.to_string()
