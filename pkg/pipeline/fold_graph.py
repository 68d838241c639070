"""
Cross-validated evaluation as a LangGraph pipeline.

    check_fold ─┬─> audio_branch ─┬─> fuse
                └─> text_branch ──┘

Each fold's graph trains both branches on the fold's training subjects and
scores its test subjects. With jobs == 1 the branches run one after the other
and folds run in order; otherwise branches fan out in parallel and folds share
a thread pool. Fold results are merged in fold order either way.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Optional, TypedDict

from langgraph.graph import END, StateGraph  # type: ignore
from tqdm import tqdm

from core.config import RunConfig
from corpus.manifest import Manifest
from fusion.folds import FoldSplit, kfold_split
from fusion.predictions import SubjectPrediction
from memory.feature_cache import FeatureCache
from pipeline.branches import fit_audio, fit_text, load_transcripts, predict_audio, predict_text
from text.model import TextPrediction
from text.transcripts import Transcript

logger = logging.getLogger(__name__)

FOLD_SEED_STRIDE = 1000


class FoldState(TypedDict):
    fold:        FoldSplit
    audio:       dict[str, Optional[float]]
    text:        dict[str, TextPrediction]
    predictions: list[SubjectPrediction]


@dataclass
class CrossValidationResult:
    folds: list[FoldSplit]
    predictions: list[SubjectPrediction]
    text: dict[str, TextPrediction]
    transcripts: dict[str, Transcript]


class FoldPipeline:
    def __init__(self, cfg: RunConfig, manifest: Manifest, cache: FeatureCache):
        self.cfg = cfg
        self.manifest = manifest
        self.records = manifest.by_id()
        self.cache = cache
        self.transcripts = load_transcripts(cfg, manifest.records)
        self._graph = self._build_graph()

    # ── Graph ─────────────────────────────────────────────────

    def _build_graph(self) -> Any:
        g = StateGraph(FoldState)

        g.add_node("check_fold",   self._node_check_fold)
        g.add_node("audio_branch", self._node_audio_branch)
        g.add_node("text_branch",  self._node_text_branch)
        g.add_node("fuse",         self._node_fuse)

        g.set_entry_point("check_fold")
        if self.cfg.jobs == 1:
            g.add_edge("check_fold", "audio_branch")
            g.add_edge("audio_branch", "text_branch")
            g.add_edge("text_branch", "fuse")
        else:
            g.add_edge("check_fold", "audio_branch")
            g.add_edge("check_fold", "text_branch")
            g.add_edge(["audio_branch", "text_branch"], "fuse")
        g.add_edge("fuse", END)

        return g.compile()

    def _fold_config(self, fold: FoldSplit) -> RunConfig:
        return self.cfg.replace(seed=self.cfg.seed + FOLD_SEED_STRIDE * fold.index)

    # ── Nodes ─────────────────────────────────────────────────

    def _node_check_fold(self, state: FoldState) -> dict:
        fold = state["fold"]
        fold.check_disjoint()
        logger.info("[Fold %d] %d train / %d test subjects", fold.index, len(fold.train_ids), len(fold.test_ids))
        return {}

    def _node_audio_branch(self, state: FoldState) -> dict:
        fold = state["fold"]
        cfg = self._fold_config(fold)
        train = [self.records[s] for s in fold.train_ids if self.records[s].audio_path is not None]
        test = [self.records[s] for s in fold.test_ids]
        model, history = fit_audio(cfg, train, self.cache)
        logger.info("[Fold %d] audio trained, best epoch %s", fold.index, history.best_epoch)
        return {"audio": predict_audio(cfg, model, test, self.cache)}

    def _node_text_branch(self, state: FoldState) -> dict:
        fold = state["fold"]
        cfg = self._fold_config(fold)
        train = [self.records[s] for s in fold.train_ids]
        test = [self.records[s] for s in fold.test_ids]
        model, history = fit_text(cfg, train, self.transcripts)
        logger.info("[Fold %d] text trained, best epoch %s", fold.index, history.best_epoch)
        return {"text": predict_text(model, test, self.transcripts)}

    def _node_fuse(self, state: FoldState) -> dict:
        fold = state["fold"]
        preds = []
        for sid in fold.test_ids:
            r = self.records[sid]
            text = state["text"].get(sid)
            preds.append(SubjectPrediction(
                sid, r.label, state["audio"].get(sid), None if text is None else text.p_t,
                r.age, r.gender, self.cfg.source,
            ))
        return {"predictions": preds}

    # ── Public API ────────────────────────────────────────────

    def run_fold(self, fold: FoldSplit) -> FoldState:
        initial: FoldState = {"fold": fold, "audio": {}, "text": {}, "predictions": []}
        return self._graph.invoke(initial)


def run_cross_validation(cfg: RunConfig, manifest: Manifest, cache: FeatureCache) -> CrossValidationResult:
    pipeline = FoldPipeline(cfg, manifest, cache)
    folds = kfold_split(manifest.ids, manifest.labels, cfg.folds, cfg.seed)
    progress = dict(desc="folds", unit="fold", leave=False)
    if cfg.jobs == 1:
        states = [pipeline.run_fold(f) for f in tqdm(folds, **progress)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            states = list(tqdm(pool.map(pipeline.run_fold, folds), total=len(folds), **progress))

    predictions: list[SubjectPrediction] = []
    text: dict[str, TextPrediction] = {}
    for state in states:
        predictions.extend(state["predictions"])
        text.update(state["text"])
    order = {sid: i for i, sid in enumerate(manifest.ids)}
    predictions.sort(key=lambda p: order[p.subject_id])
    return CrossValidationResult(folds, predictions, text, pipeline.transcripts)
