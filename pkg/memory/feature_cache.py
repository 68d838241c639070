"""
On-disk log-mel cache.

One weight-container file per (clip, denoise settings). The source WAV's
mtime and size are stored in the file's meta; an entry whose source has
changed since is rebuilt on the next request.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from audio.features import extract_clip_features
from core.errors import WeightFormatError
from core.tensor import Tensor
from core.weights import load_weights, save_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DenoiseSettings:
    enabled: bool = False
    alpha: float = 0.98
    init_frames: int = 6
    gain_floor: float = 0.1


class FeatureCache:
    def __init__(self, cache_dir: str | os.PathLike, denoise: DenoiseSettings = DenoiseSettings()):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.denoise = denoise
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self._entry_locks: dict[Path, threading.Lock] = {}

    def entry_path(self, wav_path: str | os.PathLike) -> Path:
        key = json.dumps({"path": str(Path(wav_path).resolve()), "denoise": asdict(self.denoise)}, sort_keys=True)
        return self.cache_dir / f"{hashlib.sha256(key.encode('utf-8')).hexdigest()[:24]}.logmel"

    @staticmethod
    def _source_stamp(wav_path: Path) -> dict:
        st = wav_path.stat()
        return {"source_mtime_ns": st.st_mtime_ns, "source_size": st.st_size}

    def _load_entry(self, entry: Path, stamp: dict) -> np.ndarray | None:
        if not entry.is_file():
            return None
        try:
            wf = load_weights(entry)
        except WeightFormatError as exc:
            logger.warning("[FeatureCache] unreadable entry %s (%s); rebuilding", entry.name, exc)
            return None
        if any(wf.meta.get(k) != v for k, v in stamp.items()):
            return None
        return wf.layer("logmel").get("logmel")

    def get(self, wav_path: str | os.PathLike) -> Tensor:
        """[T, 64] log-mel frames of a WAV, computed at most once per source version."""
        wav_path = Path(wav_path)
        stamp = self._source_stamp(wav_path)
        entry = self.entry_path(wav_path)
        with self._lock:
            entry_lock = self._entry_locks.setdefault(entry, threading.Lock())
        with entry_lock:
            frames = self._load_entry(entry, stamp)
            if frames is not None:
                with self._lock:
                    self.hits += 1
                return Tensor(frames, dtype=np.float32)

            d = self.denoise
            spec = extract_clip_features(
                wav_path, denoise=d.enabled, alpha=d.alpha, init_frames=d.init_frames, gain_floor=d.gain_floor
            )
            meta = {**stamp, "source": str(wav_path), "denoise": asdict(d)}
            save_weights(entry, {"logmel": {"logmel": spec.data}}, meta=meta)
        with self._lock:
            self.misses += 1
        logger.debug("[FeatureCache] %s -> %s (%d frames)", wav_path.name, entry.name, spec.shape[0])
        return spec

    def clear(self) -> int:
        removed = 0
        for entry in self.cache_dir.glob("*.logmel"):
            entry.unlink()
            removed += 1
        return removed
