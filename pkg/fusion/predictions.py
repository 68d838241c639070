"""Per-subject predictions and their CSV form."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from core.errors import ManifestError

logger = logging.getLogger(__name__)

LABELS = {"HC": 0, "AD": 1}
LABEL_NAMES = {v: k for k, v in LABELS.items()}
COLUMNS = ["subject_id", "label", "p_a", "p_t", "age", "gender", "source"]


@dataclass(frozen=True)
class SubjectPrediction:
    subject_id: str
    label: int
    p_a: float | None = None
    p_t: float | None = None
    age: int | None = None
    gender: str = ""
    source: str = ""

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"{self.subject_id}: label must be 0 (HC) or 1 (AD), got {self.label}")
        for name in ("p_a", "p_t"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError(f"{self.subject_id}: {name}={p} outside [0, 1]")


def _optional(value) -> float | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def predictions_frame(predictions: Sequence[SubjectPrediction]) -> pd.DataFrame:
    rows = [
        {
            "subject_id": p.subject_id, "label": LABEL_NAMES[p.label], "p_a": p.p_a, "p_t": p.p_t,
            "age": p.age, "gender": p.gender, "source": p.source,
        }
        for p in predictions
    ]
    return pd.DataFrame(rows, columns=COLUMNS)


def write_predictions(path: str | os.PathLike, predictions: Sequence[SubjectPrediction]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    predictions_frame(predictions).to_csv(path, index=False, float_format="%.10g")
    return path


def read_predictions(path: str | os.PathLike) -> list[SubjectPrediction]:
    df = pd.read_csv(path, dtype={"subject_id": str, "label": str, "gender": str, "source": str})
    missing = [c for c in ("subject_id", "label") if c not in df.columns]
    if missing:
        raise ManifestError(f"{path}: predictions file lacks columns {missing}")
    bad = [str(sid) for sid, lab in zip(df["subject_id"], df["label"]) if lab not in LABELS]
    if bad:
        raise ManifestError(f"{path}: labels must be AD or HC", rows=bad)
    out = []
    for row in df.to_dict("records"):
        age = _optional(row.get("age"))
        out.append(SubjectPrediction(
            subject_id=str(row["subject_id"]),
            label=LABELS[row["label"]],
            p_a=_optional(row.get("p_a")),
            p_t=_optional(row.get("p_t")),
            age=None if age is None else int(age),
            gender="" if pd.isna(row.get("gender", "")) else str(row.get("gender", "")),
            source="" if pd.isna(row.get("source", "")) else str(row.get("source", "")),
        ))
    logger.info("[Predictions] %d subjects read from %s", len(out), path)
    return out


def labels_of(predictions: Sequence[SubjectPrediction]) -> np.ndarray:
    return np.array([p.label for p in predictions], dtype=np.int64)
