"""Subject manifest: one CSV row per subject, paths relative to the manifest."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from core.errors import ManifestError
from fusion.predictions import LABELS

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("subject_id", "label", "age", "gender")
PATH_COLUMNS = ("audio_path", "transcript_path", "asr_transcript_path")
COLUMNS = REQUIRED_COLUMNS + PATH_COLUMNS + ("notes",)
GENDERS = ("female", "male")


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    label: int
    age: int
    gender: str
    audio_path: Path | None = None
    transcript_path: Path | None = None
    asr_transcript_path: Path | None = None
    notes: str = ""

    def transcript_for(self, source: str) -> Path | None:
        return self.asr_transcript_path if source == "asr" else self.transcript_path


@dataclass
class Manifest:
    path: Path
    records: list[SubjectRecord]
    diagnostics: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.subject_id for r in self.records]

    @property
    def labels(self) -> list[int]:
        return [r.label for r in self.records]

    def by_id(self) -> dict[str, SubjectRecord]:
        return {r.subject_id: r for r in self.records}

    def subset(self, ids) -> list[SubjectRecord]:
        index = self.by_id()
        return [index[i] for i in ids]


def _cell(value) -> str:
    return "" if pd.isna(value) else str(value).strip()


def ingest_manifest(path: str | os.PathLike) -> Manifest:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise ManifestError(f"{path}: missing columns {missing}")
    for col in COLUMNS:
        if col not in df.columns:
            df[col] = ""

    problems: list[str] = []
    diagnostics: list[str] = []
    seen: set[str] = set()
    records = []
    base = path.parent
    for line, row in enumerate(df.to_dict("records"), start=2):
        sid = _cell(row["subject_id"])
        label = _cell(row["label"]).upper()
        gender = _cell(row["gender"]).lower()
        age_text = _cell(row["age"])
        where = f"row {line} ({sid or '?'})"
        if not sid:
            problems.append(f"{where}: empty subject_id")
            continue
        if sid in seen:
            problems.append(f"{where}: duplicate subject_id '{sid}'")
        seen.add(sid)
        if label not in LABELS:
            problems.append(f"{where}: label '{row['label']}' is not AD or HC")
        if gender not in GENDERS:
            problems.append(f"{where}: gender '{row['gender']}' is not female or male")
        if not age_text.isdigit() or int(age_text) <= 0:
            problems.append(f"{where}: age '{age_text}' is not a positive integer")

        paths: dict[str, Path | None] = {}
        for col in PATH_COLUMNS:
            text = _cell(row[col])
            p = (base / text) if text else None
            if p is not None and not p.is_file():
                diagnostics.append(f"{where}: {col} {p} not found")
                logger.warning("[Manifest] %s: %s %s not found", where, col, p)
            paths[col] = p
        if paths["audio_path"] is None and paths["transcript_path"] is None:
            problems.append(f"{where}: neither audio_path nor transcript_path given")

        if not any(p.startswith(where) for p in problems):
            records.append(SubjectRecord(
                sid, LABELS[label], int(age_text), gender,
                paths["audio_path"], paths["transcript_path"], paths["asr_transcript_path"],
                _cell(row["notes"]),
            ))

    if problems:
        raise ManifestError(f"{path}: {len(problems)} invalid rows:\n  " + "\n  ".join(problems), rows=problems)
    logger.info("[Manifest] %d subjects from %s", len(records), path)
    return Manifest(path, records, diagnostics)


def write_manifest(path: str | os.PathLike, records: list[SubjectRecord]) -> Path:
    path = Path(path)
    base = path.parent
    rows = []
    for r in records:
        def rel(p: Path | None) -> str:
            return "" if p is None else os.path.relpath(p, base).replace(os.sep, "/")
        rows.append({
            "subject_id": r.subject_id, "label": "AD" if r.label == 1 else "HC", "age": r.age,
            "gender": r.gender, "audio_path": rel(r.audio_path), "transcript_path": rel(r.transcript_path),
            "asr_transcript_path": rel(r.asr_transcript_path), "notes": r.notes,
        })
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=list(COLUMNS)).to_csv(path, index=False)
    return path
