"""
Three-branch segment classifier.

    word vectors -> 1-D CNN (widths 2/3/4) -> max over time -> dense 64 ─┐
    subword ids  -> contextual embedder (d_c) ──────────────────────────┼─ concat -> BN -> dense -> sigmoid
    transcript   -> sentence embedder (d_s), shared by all its segments ┘

Transcript probability is the mean of its segment probabilities.
"""
from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from core import kernels as K
from core.config import RunConfig
from core.errors import ShapeError, WeightFormatError
from core.tensor import GradTape, LayerParams, Tensor
from core.weights import load_weights, save_weights
from memory.embedding_cache import SentenceEmbeddingCache
from text.encoders import SENTENCE_START, Embedder, EncoderInput, MiniEncoder, make_embedder
from text.segments import TranscriptSegment, segment_tokens
from text.transcripts import Transcript
from text.wordpiece import WordPieceVocab, wordpiece_split, wordpiece_tokenize
from text.wordvectors import WordVectorTable

logger = logging.getLogger(__name__)

TOP_K = 5


@dataclass(frozen=True)
class TextModelConfig:
    max_tokens: int = 8
    cnn_widths: tuple[int, ...] = (2, 3, 4)
    cnn_filters: int = 32
    cnn_out: int = 64
    context_dim: int = 128
    sentence_dim: int = 128
    subword_max_len: int = 16
    sentence_max_len: int = 256
    encoder_layers: int = 2
    encoder_heads: int = 4
    embedder: str = "mini"
    embedding_file: str = ""
    sbert_model: str = "all-MiniLM-L6-v2"
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-3
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "TextModelConfig":
        return cls(
            max_tokens=cfg.max_tokens, cnn_widths=tuple(int(w) for w in cfg.cnn_widths),
            cnn_filters=cfg.cnn_filters, cnn_out=cfg.cnn_out, context_dim=cfg.context_dim,
            sentence_dim=cfg.sentence_dim, subword_max_len=cfg.subword_max_len,
            sentence_max_len=cfg.sentence_max_len, encoder_layers=cfg.encoder_layers,
            encoder_heads=cfg.encoder_heads, embedder=cfg.embedder, embedding_file=cfg.embedding_file,
            sbert_model=cfg.sbert_model, bn_momentum=cfg.bn_momentum, bn_epsilon=cfg.bn_epsilon,
            seed=cfg.seed,
        )

    def as_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["cnn_widths"] = list(self.cnn_widths)
        return d


@dataclass(frozen=True)
class SegmentBatch:
    wv_ids: np.ndarray
    wv_fixed: np.ndarray
    context: EncoderInput
    transcript_rows: np.ndarray
    transcript_ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.transcript_rows)


@dataclass(frozen=True)
class TextPrediction:
    transcript_id: str
    segments: tuple[TranscriptSegment, ...]
    segment_probs: tuple[float, ...]
    p_t: float
    top: tuple[int, ...]


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class TextModel:
    def __init__(
        self,
        config: TextModelConfig,
        vocab: WordPieceVocab,
        wordvecs: WordVectorTable,
        context: Embedder | None = None,
        sentence: Embedder | None = None,
    ):
        self.config = config
        self.vocab = vocab
        self.wordvecs = wordvecs
        self.context = context or make_embedder(
            config.embedder, "ctx", len(vocab), config.context_dim, config.encoder_layers,
            config.encoder_heads, config.subword_max_len, config.seed + 1,
            config.embedding_file, config.sbert_model,
        )
        self.sentence = sentence or make_embedder(
            config.embedder, "sent", len(vocab), config.sentence_dim, config.encoder_layers,
            config.encoder_heads, config.sentence_max_len, config.seed + 2,
            config.embedding_file, config.sbert_model,
        )

        rng = np.random.default_rng(config.seed)
        d, f = wordvecs.dim, config.cnn_filters
        self.wordvec_layer = LayerParams("wordvec", {"weight": wordvecs.vectors})
        self.cnn: list[LayerParams] = []
        for w in config.cnn_widths:
            if w > config.max_tokens:
                raise ShapeError(f"CNN width {w} exceeds max_tokens {config.max_tokens}")
            self.cnn.append(LayerParams(f"cnn_w{w}", {
                "weight": _he_uniform(rng, (w, 1, d, f), w * d),
                "bias": np.zeros(f, dtype=np.float32),
            }))
        cnn_in = f * len(config.cnn_widths)
        self.cnn_proj = LayerParams("cnn_proj", {
            "weight": _he_uniform(rng, (cnn_in, config.cnn_out), cnn_in),
            "bias": np.zeros(config.cnn_out, dtype=np.float32),
        })
        c = self.concat_dim
        self.concat_bn = LayerParams("concat_bn", {
            "gamma": np.ones(c, dtype=np.float32),
            "beta": np.zeros(c, dtype=np.float32),
            "running_mean": np.zeros(c, dtype=np.float32),
            "running_var": np.ones(c, dtype=np.float32),
        })
        self.out = LayerParams("out", {
            "weight": _he_uniform(rng, (c, 1), c),
            "bias": np.zeros(1, dtype=np.float32),
        })
        self._transcripts: dict[str, Transcript] = {}
        self.sentence_cache = SentenceEmbeddingCache(self._encode_registered)

    # ── structure ─────────────────────────────────────────────

    @property
    def concat_dim(self) -> int:
        return self.config.cnn_out + self.context.dim + self.sentence.dim

    def cnn_layers(self) -> list[LayerParams]:
        return self.cnn + [self.cnn_proj]

    def head_layers(self) -> list[LayerParams]:
        return [self.concat_bn, self.out]

    def context_layers(self) -> list[LayerParams]:
        return self.context.layers()

    def sentence_layers(self) -> list[LayerParams]:
        return self.sentence.layers()

    def parameters(self) -> list[LayerParams]:
        return (
            [self.wordvec_layer] + self.cnn_layers() + self.head_layers()
            + self.context_layers() + self.sentence_layers()
        )

    # ── inputs ────────────────────────────────────────────────

    def register(self, transcripts: Sequence[Transcript]) -> None:
        for t in transcripts:
            known = self._transcripts.get(t.subject_id)
            if known is not None and known != t:
                self.sentence_cache.discard(t.subject_id)
            self._transcripts[t.subject_id] = t

    def transcript_input(self, transcript: Transcript) -> EncoderInput:
        pieces = sum(len(wordpiece_split(tok, self.vocab)) for tok in transcript.tokens)
        length = min(pieces, self.config.sentence_max_len - 2) + 2
        ids, mask = wordpiece_tokenize(transcript.tokens, self.vocab, length)
        return EncoderInput(
            ids[None], mask[None], ((transcript.subject_id, SENTENCE_START),), (transcript.raw_text,)
        )

    def segment_batch(self, segments: Sequence[TranscriptSegment]) -> SegmentBatch:
        cfg = self.config
        n = len(segments)
        wv_ids = np.empty((n, cfg.max_tokens), dtype=np.int64)
        wv_fixed = np.empty((n, cfg.max_tokens, self.wordvecs.dim), dtype=np.float32)
        sub_ids = np.empty((n, cfg.subword_max_len), dtype=np.int64)
        sub_mask = np.empty((n, cfg.subword_max_len), dtype=bool)
        order: dict[str, int] = {}
        rows = np.empty(n, dtype=np.int64)
        for i, seg in enumerate(segments):
            wv_ids[i], wv_fixed[i] = self.wordvecs.encode(seg.tokens, cfg.max_tokens)
            sub_ids[i], sub_mask[i] = wordpiece_tokenize(seg.tokens, self.vocab, cfg.subword_max_len)
            rows[i] = order.setdefault(seg.transcript_id, len(order))
        context = EncoderInput(
            sub_ids, sub_mask,
            tuple((s.transcript_id, s.start) for s in segments),
            tuple(s.text() for s in segments),
        )
        return SegmentBatch(wv_ids, wv_fixed, context, rows, tuple(order))

    # ── branches ──────────────────────────────────────────────

    def cnn_from_matrix(self, x: Tensor, tape: GradTape | None = None) -> Tensor:
        """[N, max_tokens, d] word-vector matrices -> [N, cnn_out]."""
        if x.ndim != 3 or x.shape[2] != self.wordvecs.dim:
            raise ShapeError(f"expected [N, T, {self.wordvecs.dim}] word vectors, got {x.shape}")
        pooled = [
            K.max_over_time(K.activation(K.conv1d(x, layer, tape=tape), "relu", tape=tape), tape=tape)
            for layer in self.cnn
        ]
        return K.dense(K.concat(pooled, axis=-1, tape=tape), self.cnn_proj, tape=tape)

    def fasttext_cnn_forward(self, matrix: Tensor) -> Tensor:
        if matrix.ndim != 2:
            raise ShapeError(f"expected [max_tokens, d] matrix, got {matrix.shape}")
        out = self.cnn_from_matrix(K.reshape(matrix, (1,) + matrix.shape))
        return K.reshape(out, (out.shape[1],))

    def cnn_branch(self, batch: SegmentBatch, tape: GradTape | None = None) -> Tensor:
        x = K.embedding_lookup(batch.wv_ids, self.wordvec_layer, fixed=batch.wv_fixed, tape=tape)
        return self.cnn_from_matrix(x, tape)

    def encode_sentences(self, transcripts: Sequence[Transcript], tape: GradTape | None = None) -> Tensor:
        """[M, d_s]; each transcript is encoded on its own, unpadded."""
        rows = [self.sentence.embed(self.transcript_input(t), tape=tape) for t in transcripts]
        return K.concat(rows, axis=0, tape=tape) if len(rows) > 1 else rows[0]

    def _encode_registered(self, transcript_ids: Sequence[str]) -> Tensor:
        return self.encode_sentences([self._transcripts[t] for t in transcript_ids])

    def head(
        self,
        cnn: Tensor,
        ctx: Tensor,
        sent: Tensor,
        mode: K.Mode = "infer",
        tape: GradTape | None = None,
        update_stats: bool = True,
    ) -> Tensor:
        h = K.concat([cnn, ctx, sent], axis=-1, tape=tape)
        if h.shape[1] != self.concat_dim:
            raise ShapeError(f"concatenated width {h.shape[1]} != {self.concat_dim}")
        h = K.batchnorm(
            h, self.concat_bn, mode=mode, epsilon=self.config.bn_epsilon,
            momentum=self.config.bn_momentum, update_stats=update_stats, tape=tape,
        )
        logits = K.dense(h, self.out, tape=tape)
        return K.activation(K.reshape(logits, (logits.shape[0],), tape=tape), "sigmoid", tape=tape)

    def forward(
        self,
        batch: SegmentBatch,
        sentence_table: Tensor,
        mode: K.Mode = "infer",
        tape: GradTape | None = None,
        update_stats: bool = True,
    ) -> Tensor:
        """P0 per segment; sentence_table holds one row per entry of batch.transcript_ids."""
        cnn = self.cnn_branch(batch, tape)
        ctx = self.context.embed(batch.context, tape=tape)
        sent = K.take_rows(sentence_table, batch.transcript_rows, tape=tape)
        return self.head(cnn, ctx, sent, mode=mode, tape=tape, update_stats=update_stats)

    # ── inference ─────────────────────────────────────────────

    def predict_segments(
        self,
        segments: Sequence[TranscriptSegment],
        transcripts: Mapping[str, Transcript],
        batch_size: int = 256,
    ) -> np.ndarray:
        self.register(list(transcripts.values()))
        probs = np.empty(len(segments), dtype=np.float64)
        for start in range(0, len(segments), batch_size):
            batch = self.segment_batch(segments[start:start + batch_size])
            table = Tensor(self.sentence_cache.get_many(batch.transcript_ids))
            probs[start:start + len(batch)] = self.forward(batch, table, mode="infer").data
        return probs


def classify_segment(model: TextModel, segment: TranscriptSegment, transcript: Transcript) -> float:
    return float(model.predict_segments([segment], {transcript.subject_id: transcript})[0])


def aggregate_text(probabilities: Sequence[float]) -> float:
    if len(probabilities) == 0:
        raise ValueError("no segment probabilities to aggregate")
    return float(np.mean(np.asarray(probabilities, dtype=np.float64)))


def top_segments(probs: Sequence[float], starts: Sequence[int], k: int = TOP_K) -> tuple[int, ...]:
    """Indices of the k most probable segments; ties go to the lower start index."""
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], starts[i]))
    return tuple(order[:k])


def predict_transcript(model: TextModel, transcript: Transcript) -> TextPrediction:
    segments = segment_tokens(transcript.tokens, transcript.subject_id)
    probs = model.predict_segments(segments, {transcript.subject_id: transcript})
    return TextPrediction(
        transcript.subject_id,
        tuple(segments),
        tuple(float(p) for p in probs),
        aggregate_text(probs),
        top_segments(probs, [s.start for s in segments]),
    )


def highlight_top5(prediction: TextPrediction) -> list[tuple[str, float]]:
    return [(prediction.segments[i].text(), prediction.segment_probs[i]) for i in prediction.top]


def render_highlights(prediction: TextPrediction, transcript: Transcript, threshold: float = 0.5) -> str:
    """Report with the full transcript; top segments are wrapped in >>> <<<."""
    spans = sorted(
        (prediction.segments[i].start, prediction.segments[i].start + len(prediction.segments[i].real_tokens))
        for i in prediction.top
    )
    merged: list[list[int]] = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    opens = {lo for lo, _ in merged}
    closes = {hi for _, hi in merged}

    words: list[str] = []
    for i, tok in enumerate(transcript.tokens):
        if i in closes:
            words.append("<<<")
        if i in opens:
            words.append(">>>")
        words.append(tok)
    if len(transcript.tokens) in closes:
        words.append("<<<")

    label = "AD" if prediction.p_t >= threshold else "HC"
    lines = [
        f"Subject {prediction.transcript_id} ({transcript.source} transcript)  p_t = {prediction.p_t:.4f}  -> {label}",
        "Top segments:",
    ]
    for rank, (text, prob) in enumerate(highlight_top5(prediction), start=1):
        lines.append(f"  {rank}. [{prob:.4f}] {text}")
    lines.append("Transcript:")
    lines.append(" ".join(words))
    return "\n".join(lines) + "\n"


# ── persistence ───────────────────────────────────────────────

def save_text_model(model: TextModel, path: str | os.PathLike) -> None:
    meta = {
        "kind": "text",
        "config": model.config.as_dict(),
        "vocab": model.vocab.pieces,
        "wordvec_words": model.wordvecs.words,
        "wordvec_subwords": model.wordvecs.subwords,
        "wordvec_seed": model.wordvecs.seed,
    }
    save_weights(path, model.parameters(), meta=meta)


def load_text_model(path: str | os.PathLike) -> TextModel:
    wf = load_weights(path)
    meta = wf.meta
    if meta.get("kind") != "text":
        raise WeightFormatError(f"{path} does not hold a text model")
    raw = dict(meta["config"])
    raw["cnn_widths"] = tuple(raw["cnn_widths"])
    config = TextModelConfig(**raw)
    vectors = wf.layer("wordvec").get("weight")
    if vectors is None:
        raise WeightFormatError(f"{path}: missing wordvec/weight")
    table = WordVectorTable(
        meta["wordvec_words"], vectors, subwords=meta["wordvec_subwords"], seed=meta["wordvec_seed"]
    )
    model = TextModel(config, WordPieceVocab(meta["vocab"]), table)
    for layer in model.parameters():
        if layer is model.wordvec_layer:
            continue
        stored = wf.layer(layer.name)
        for key in layer.arrays:
            if key not in stored or stored[key].shape != layer[key].shape:
                raise WeightFormatError(f"{path}: missing or misshapen {layer.name}/{key}")
            layer.arrays[key][...] = stored[key]
    return model


def load_encoder_weights(model: TextModel, path: str | os.PathLike) -> None:
    for encoder in (model.context, model.sentence):
        if isinstance(encoder, MiniEncoder):
            encoder.load(path, strict=False)
