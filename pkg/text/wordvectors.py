"""
Word-vector table with a character n-gram fallback for unseen tokens.

Unseen tokens are embedded as the mean of hashed n-gram bucket vectors
(n = 3..6 over "<token>", FNV-1a into 2M buckets). Bucket vectors are not
stored; each is regenerated from (seed, bucket), so the fallback is
deterministic and costs no memory. Tables built without subword support map
unseen tokens to a single trainable [UNK] row instead.
"""
from __future__ import annotations

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from core.errors import ShapeError
from core.tensor import Tensor
from text.segments import PAD, TranscriptSegment

logger = logging.getLogger(__name__)

UNK_WORD = "[UNK]"
BUCKETS = 2_000_000
MIN_N, MAX_N = 3, 6


def fnv1a(text: str) -> int:
    h = 2166136261
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 16777619) & 0xFFFFFFFF
    return h


def char_ngrams(token: str, min_n: int = MIN_N, max_n: int = MAX_N) -> list[str]:
    word = f"<{token}>"
    return [word[i:i + n] for n in range(min_n, max_n + 1) for i in range(len(word) - n + 1)]


@lru_cache(maxsize=200_000)
def _bucket_vector(seed: int, bucket: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng([seed, bucket])
    vec = rng.uniform(-1.0 / dim, 1.0 / dim, size=dim).astype(np.float32)
    vec.setflags(write=False)
    return vec


class WordVectorTable:
    def __init__(
        self,
        words: Sequence[str],
        vectors: np.ndarray,
        subwords: bool = True,
        seed: int = 0,
        buckets: int = BUCKETS,
    ):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise ShapeError(f"{len(words)} words but vector matrix of shape {vectors.shape}")
        words = list(words)
        if not subwords and UNK_WORD not in words:
            rng = np.random.default_rng([seed, len(words)])
            words.append(UNK_WORD)
            unk = rng.uniform(-0.05, 0.05, size=(1, vectors.shape[1])).astype(np.float32)
            vectors = np.concatenate([vectors, unk], axis=0)
        self.words = words
        self.vectors = np.ascontiguousarray(vectors)
        self.index = {w: i for i, w in enumerate(words)}
        self.subwords = subwords
        self.seed = seed
        self.buckets = buckets

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def row(self, token: str) -> int:
        """Row id of a token; -1 for PAD and for unseen tokens served by n-grams."""
        if token == PAD:
            return -1
        idx = self.index.get(token)
        if idx is None:
            idx = self.index.get(token.lower())
        if idx is not None:
            return idx
        return -1 if self.subwords else self.index[UNK_WORD]

    def oov_vector(self, token: str) -> np.ndarray:
        """Mean, not sum, of the hashed n-gram bucket vectors; zeros when the token has no n-grams."""
        grams = char_ngrams(token)
        if not grams:
            return np.zeros(self.dim, dtype=np.float32)
        total = np.zeros(self.dim, dtype=np.float32)
        for g in grams:
            total += _bucket_vector(self.seed, fnv1a(g) % self.buckets, self.dim)
        return total / len(grams)

    def lookup(self, token: str) -> np.ndarray:
        if token == PAD:
            return np.zeros(self.dim, dtype=np.float32)
        idx = self.row(token)
        return self.vectors[idx].copy() if idx >= 0 else self.oov_vector(token)

    def encode(self, tokens: Sequence[str], max_tokens: int) -> tuple[np.ndarray, np.ndarray]:
        """(row ids [max_tokens], fixed rows [max_tokens, d]); post-truncated and post-padded."""
        ids = np.full(max_tokens, -1, dtype=np.int64)
        fixed = np.zeros((max_tokens, self.dim), dtype=np.float32)
        for i, tok in enumerate(tokens[:max_tokens]):
            if tok == PAD:
                continue
            ids[i] = self.row(tok)
            if ids[i] < 0:
                fixed[i] = self.oov_vector(tok)
        return ids, fixed

    # ── construction / files ──────────────────────────────────

    @classmethod
    def random(
        cls, words: Iterable[str], dim: int = 300, seed: int = 0, subwords: bool = True
    ) -> "WordVectorTable":
        """Seeded stand-in table over a vocabulary when no vector file is configured."""
        vocab = sorted({w for w in words if w != PAD})
        rng = np.random.default_rng(seed)
        vectors = rng.uniform(-0.5 / dim**0.5, 0.5 / dim**0.5, size=(len(vocab), dim)).astype(np.float32)
        return cls(vocab, vectors, subwords=subwords, seed=seed)

    @classmethod
    def from_vec_file(cls, path: str | os.PathLike, subwords: bool = True, seed: int = 0) -> "WordVectorTable":
        """Text format: first line "count dim", then "token v1 ... vd" per line."""
        with open(path, "r", encoding="utf-8") as f:
            count, dim = (int(v) for v in f.readline().split())
            words, rows = [], []
            for line in f:
                parts = line.rstrip("\n").rstrip().split(" ")
                if len(parts) != dim + 1:
                    raise ShapeError(f"{path}: '{parts[0]}' has {len(parts) - 1} values, expected {dim}")
                words.append(parts[0])
                rows.append(np.asarray(parts[1:], dtype=np.float32))
        if len(words) != count:
            logger.warning("[WordVec] %s declares %d vectors but holds %d", path, count, len(words))
        vectors = np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
        return cls(words, vectors, subwords=subwords, seed=seed)

    def write_vec_file(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{len(self.words)} {self.dim}\n")
            for word, vec in zip(self.words, self.vectors):
                f.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")
        return path


def encode_segment_wordvecs(
    segment: TranscriptSegment, table: WordVectorTable, max_tokens: int = 8
) -> Tensor:
    """[max_tokens, d] matrix; PAD and padding rows are zero."""
    if max_tokens < len(segment.tokens):
        logger.debug("[WordVec] truncating segment at %d to %d tokens", segment.start, max_tokens)
    out = np.zeros((max_tokens, table.dim), dtype=np.float32)
    for i, tok in enumerate(segment.tokens[:max_tokens]):
        out[i] = table.lookup(tok)
    return Tensor.wrap(out)
