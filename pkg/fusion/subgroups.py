"""Age-bin and gender breakdowns of fused predictions."""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from fusion.bootstrap import bootstrap_ci
from fusion.fuse import fused_scores
from fusion.metrics import accuracy, compute_metrics
from fusion.predictions import SubjectPrediction, labels_of

logger = logging.getLogger(__name__)

AGE_BINS: tuple[tuple[int, int], ...] = ((46, 55), (56, 65), (66, 75), (76, 85), (86, 95))
GENDERS = ("female", "male")
ALL = "All"
COLUMNS = [
    "group", "count", "fraction", "accuracy", "specificity", "sensitivity", "f1", "acc_ci_lo", "acc_ci_hi",
]


@dataclass(frozen=True)
class SubgroupReport:
    age: pd.DataFrame
    gender: pd.DataFrame
    excluded: tuple[str, ...] = ()


def age_bin(age: int | None) -> str | None:
    """Upper bounds are inclusive: 55 -> "46-55", 56 -> "56-65"."""
    if age is None:
        return None
    for lo, hi in AGE_BINS:
        if lo <= age <= hi:
            return f"{lo}-{hi}"
    return None


def _group_rows(
    groups: list[tuple[str, np.ndarray]],
    labels: np.ndarray,
    scores: np.ndarray,
    threshold: float,
    n_boot: int,
    level: float,
    seed: int,
) -> pd.DataFrame:
    total = sum(int(mask.sum()) for name, mask in groups if name != ALL)
    metric = functools.partial(accuracy, threshold=threshold)
    rows = []
    for name, mask in groups:
        count = int(mask.sum())
        row: dict = {"group": name, "count": count, "fraction": count / total if total else 0.0}
        if count == 0:
            logger.warning("[Subgroups] group %s is empty", name)
            row.update({k: None for k in COLUMNS[3:]})
        else:
            m = compute_metrics(labels[mask], scores[mask], threshold)
            ci = bootstrap_ci(metric, labels[mask], scores[mask], n=n_boot, level=level, seed=seed)
            row.update({
                "accuracy": m.accuracy, "specificity": m.specificity, "sensitivity": m.sensitivity,
                "f1": m.f1, "acc_ci_lo": ci.lo, "acc_ci_hi": ci.hi,
            })
        rows.append(row)
    return pd.DataFrame(rows, columns=COLUMNS)


def subgroup_report(
    predictions: Sequence[SubjectPrediction],
    w: float,
    threshold: float = 0.5,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> SubgroupReport:
    labels = labels_of(predictions)
    scores = fused_scores(predictions, w)

    bins = np.array([age_bin(p.age) or "" for p in predictions])
    excluded = tuple(p.subject_id for p, b in zip(predictions, bins) if not b)
    if excluded:
        logger.warning("[Subgroups] %d subjects without an age in %d-%d left out of the age table",
                       len(excluded), AGE_BINS[0][0], AGE_BINS[-1][1])
    age_groups = [(f"{lo}-{hi}", bins == f"{lo}-{hi}") for lo, hi in AGE_BINS]
    age_groups.append((ALL, bins != ""))

    genders = np.array([p.gender.lower() for p in predictions])
    gender_groups = [(g, genders == g) for g in GENDERS]
    gender_groups.append((ALL, np.isin(genders, GENDERS)))

    return SubgroupReport(
        age=_group_rows(age_groups, labels, scores, threshold, n_boot, level, seed),
        gender=_group_rows(gender_groups, labels, scores, threshold, n_boot, level, seed),
        excluded=excluded,
    )
