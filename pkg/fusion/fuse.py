"""Weighted late fusion of audio and text probabilities."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from fusion.predictions import SubjectPrediction

TEXT_ONLY_WEIGHT = 1e14
AD, HC = "AD", "HC"


def late_fuse(p_a: float, p_t: float, w: float) -> float:
    """(p_a + w * p_t) / (1 + w)"""
    if w < 0:
        raise ValueError(f"fusion weight must be non-negative, got {w}")
    for name, p in (("p_a", p_a), ("p_t", p_t)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name}={p} outside [0, 1]")
    return (p_a + w * p_t) / (1.0 + w)


def classify(p: float, threshold: float = 0.5) -> str:
    return AD if p >= threshold else HC


def fused_score(pred: SubjectPrediction, w: float) -> float | None:
    """p_c for one subject; a missing branch is tolerated only when w selects the other."""
    if pred.p_a is not None and pred.p_t is not None:
        return late_fuse(pred.p_a, pred.p_t, w)
    if w == 0 and pred.p_a is not None:
        return pred.p_a
    if w >= TEXT_ONLY_WEIGHT and pred.p_t is not None:
        return pred.p_t
    return None


def fused_scores(predictions: Sequence[SubjectPrediction], w: float) -> np.ndarray:
    scores = [fused_score(p, w) for p in predictions]
    missing = [p.subject_id for p, s in zip(predictions, scores) if s is None]
    if missing:
        raise ValueError(f"w={w:g} needs both branch probabilities; missing for {missing[:5]}")
    return np.asarray(scores, dtype=np.float64)
