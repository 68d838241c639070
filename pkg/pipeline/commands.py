"""
Subcommand runners. Each takes the resolved RunConfig (plus command-specific
inputs), writes its artifacts under cfg.out_dir with sidecars, and returns
the paths it wrote.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from audio.model import load_model, save_model
from core.config import RunConfig
from core.errors import UsageError
from corpus.manifest import Manifest, ingest_manifest
from corpus.synth import synth_corpus
from fusion.predictions import SubjectPrediction, read_predictions, write_predictions
from fusion.report import build_report, roc_frame, write_report_json
from fusion.sweep import format_grid, sweep_grid
from pipeline.artifacts import RunDirectory, read_sidecar
from pipeline.branches import (
    extract_features, feature_cache, fit_audio, fit_text, load_transcripts, predict_audio, predict_text,
)
from pipeline.fold_graph import run_cross_validation
from text.model import load_text_model, render_highlights, save_text_model

logger = logging.getLogger(__name__)

AUDIO_MODEL = "audio_model.adsw"
TEXT_MODEL = "text_model.adsw"
PREDICTIONS = "predictions.csv"


def _manifest(cfg: RunConfig) -> Manifest:
    if not cfg.manifest:
        raise UsageError("this command needs a manifest (--manifest or key 'manifest')")
    return ingest_manifest(cfg.manifest)


def _start(cfg: RunConfig, command: str) -> RunDirectory:
    run = RunDirectory(cfg)
    logger.info("[%s] config %s, seed %d, out %s", command, cfg.config_hash(), cfg.seed, run.root)
    for key, value in cfg.as_dict().items():
        logger.debug("[%s]   %s = %s", command, key, value)
    run.write_resolved_config()
    return run


def _write_csv(run: RunDirectory, name: str, df: pd.DataFrame) -> Path:
    df.to_csv(run.path(name), index=False, float_format="%.10g")
    return run.record(name)


def cmd_features(cfg: RunConfig) -> list[Path]:
    run = _start(cfg, "features")
    manifest = _manifest(cfg)
    cache = feature_cache(cfg)
    frames = extract_features(cfg, manifest.records, cache)
    k = cfg.patch_frames
    df = pd.DataFrame(
        [{"subject_id": sid, "frames": n, "patches": n // k} for sid, n in frames.items()],
        columns=["subject_id", "frames", "patches"],
    )
    logger.info("[features] %d clips (%d cache hits, %d computed)", len(df), cache.hits, cache.misses)
    return [_write_csv(run, "features.csv", df)]


def cmd_train_audio(cfg: RunConfig) -> list[Path]:
    run = _start(cfg, "train-audio")
    manifest = _manifest(cfg)
    records = [r for r in manifest.records if r.audio_path is not None]
    model, history = fit_audio(cfg, records, feature_cache(cfg))
    save_model(model, run.path(AUDIO_MODEL))
    history.write_csv(run.path("audio_history.csv"))
    return [run.record(AUDIO_MODEL), run.record("audio_history.csv")]


def cmd_train_text(cfg: RunConfig) -> list[Path]:
    run = _start(cfg, "train-text")
    manifest = _manifest(cfg)
    model, history = fit_text(cfg, manifest.records, load_transcripts(cfg, manifest.records))
    save_text_model(model, run.path(TEXT_MODEL))
    history.write_csv(run.path("text_history.csv"))
    return [run.record(TEXT_MODEL), run.record("text_history.csv")]


def cmd_predict(cfg: RunConfig) -> list[Path]:
    run = _start(cfg, "predict")
    manifest = _manifest(cfg)
    audio_path, text_path = run.root / AUDIO_MODEL, run.root / TEXT_MODEL
    if not audio_path.is_file() and not text_path.is_file():
        raise UsageError(f"predict needs {AUDIO_MODEL} or {TEXT_MODEL} in {run.root}; run train-audio/train-text")

    p_a: dict[str, float | None] = {}
    if audio_path.is_file():
        p_a = predict_audio(cfg, load_model(audio_path), manifest.records, feature_cache(cfg))
    written = []
    p_t: dict[str, float] = {}
    if text_path.is_file():
        transcripts = load_transcripts(cfg, manifest.records)
        model = load_text_model(text_path)
        for sid, pred in predict_text(model, manifest.records, transcripts).items():
            p_t[sid] = pred.p_t
            name = f"highlights/{sid}.txt"
            written.append(run.write_text(name, render_highlights(pred, transcripts[sid], cfg.threshold)))

    preds = [
        SubjectPrediction(r.subject_id, r.label, p_a.get(r.subject_id), p_t.get(r.subject_id),
                          r.age, r.gender, cfg.source)
        for r in manifest.records
    ]
    write_predictions(run.path(PREDICTIONS), preds)
    return [run.record(PREDICTIONS)] + written


def _variant_key(path: Path, preds: Sequence[SubjectPrediction], cfg: RunConfig) -> tuple[str, str]:
    meta = read_sidecar(path)
    source = meta.get("source") or (preds[0].source if preds and preds[0].source else cfg.source)
    return str(source), str(meta.get("segment", cfg.segment))


def cmd_fuse(cfg: RunConfig, prediction_files: Sequence[str] = ()) -> list[Path]:
    run = _start(cfg, "fuse")
    files = [Path(p) for p in prediction_files] or [run.root / PREDICTIONS]
    missing = [str(p) for p in files if not p.is_file()]
    if missing:
        raise UsageError(f"predictions file(s) not found: {', '.join(missing)} (--predictions)")
    variants = {}
    for path in files:
        preds = read_predictions(path)
        variants[_variant_key(path, preds, cfg)] = preds
    grid = sweep_grid(variants, cfg.fusion_weights, cfg.threshold)
    table = format_grid(grid)
    print(table)
    return [_write_csv(run, "fusion_sweep.csv", grid), run.write_text("fusion_table.txt", table + "\n")]


def cmd_evaluate(cfg: RunConfig) -> list[Path]:
    run = _start(cfg, "evaluate")
    manifest = _manifest(cfg)
    cache = feature_cache(cfg)
    extract_features(cfg, manifest.records, cache)
    result = run_cross_validation(cfg, manifest, cache)

    complete = [p for p in result.predictions if p.p_a is not None and p.p_t is not None]
    dropped = [p.subject_id for p in result.predictions if p.p_a is None or p.p_t is None]
    if dropped:
        logger.warning("[evaluate] %d subjects lack a branch probability and are left out: %s",
                       len(dropped), ", ".join(dropped[:10]))
    report = build_report(
        complete, result.folds, cfg.fusion_weights, cfg.threshold,
        cfg.bootstrap_samples, cfg.ci_level, cfg.seed,
        meta={"config_hash": cfg.config_hash(), "seed": cfg.seed, "n_subjects": len(complete)},
    )
    report.diagnostics.extend(f"{sid}: missing branch probability" for sid in dropped)

    written = []
    write_predictions(run.path(PREDICTIONS), result.predictions)
    written.append(run.record(PREDICTIONS))
    write_report_json(run.path("report.json"), report)
    written.append(run.record("report.json", best_weight=report.best_weight))
    written.append(_write_csv(run, "roc.csv", roc_frame(report)))
    written.append(_write_csv(run, "sweep.csv", report.sweep))
    written.append(_write_csv(run, "subgroups_age.csv", report.subgroups.age))
    written.append(_write_csv(run, "subgroups_gender.csv", report.subgroups.gender))
    for sid, pred in sorted(result.text.items()):
        text = render_highlights(pred, result.transcripts[sid], cfg.threshold)
        written.append(run.write_text(f"highlights/{sid}.txt", text))
    logger.info(
        "[evaluate] pooled accuracy %.4f at w=%g over %d folds",
        report.pooled["accuracy"], report.best_weight, len(report.folds),
    )
    return written


def cmd_synth(cfg: RunConfig, n_subjects: int) -> list[Path]:
    run = _start(cfg, "synth")
    manifest = synth_corpus(n_subjects, cfg.seed, run.root, duration=cfg.synth_duration)
    return [run.record(manifest.path.name, n_subjects=n_subjects, duration=cfg.synth_duration)]


COMMANDS = ("features", "train-audio", "train-text", "predict", "fuse", "evaluate", "synth")
