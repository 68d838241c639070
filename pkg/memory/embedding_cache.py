"""
SentenceEmbeddingCache
======================
One sentence vector per transcript, embedded ONCE and reused by every segment
of that transcript. A single writer fills an entry; concurrent readers only
ever see complete vectors. Training invalidates the cache after each epoch's
sentence-encoder update.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from core.tensor import Tensor


class SentenceEmbeddingCache:
    def __init__(self, encode: Callable[[Sequence[str]], Tensor]):
        """`encode(transcript_ids)` returns a [len(ids), d] Tensor."""
        self._encode = encode
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.encoder_calls = 0

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, transcript_id: str) -> bool:
        return transcript_id in self._vectors

    def put(self, transcript_id: str, vector: np.ndarray) -> None:
        vec = np.array(vector, dtype=np.float32)
        vec.setflags(write=False)
        with self._lock:
            self._vectors[transcript_id] = vec

    def get_many(self, transcript_ids: Sequence[str]) -> np.ndarray:
        missing = [t for t in dict.fromkeys(transcript_ids) if t not in self._vectors]
        if missing:
            with self._lock:
                missing = [t for t in missing if t not in self._vectors]
                for tid in missing:
                    self.encoder_calls += 1
                    self._vectors[tid] = np.array(self._encode([tid]).data[0], dtype=np.float32)
                    self._vectors[tid].setflags(write=False)
        return np.stack([self._vectors[t] for t in transcript_ids])

    def get(self, transcript_id: str) -> np.ndarray:
        return self.get_many([transcript_id])[0]

    def discard(self, transcript_id: str) -> None:
        with self._lock:
            self._vectors.pop(transcript_id, None)

    def invalidate(self) -> None:
        with self._lock:
            self._vectors.clear()
