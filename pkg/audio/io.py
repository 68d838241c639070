"""WAV reading/writing and resampling."""
from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from core.errors import AudioFormatError

logger = logging.getLogger(__name__)

SUPPORTED_SUBTYPES = ("PCM_U8", "PCM_S8", "PCM_16", "PCM_24", "PCM_32", "FLOAT")


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    clip_id: str = ""

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise AudioFormatError(f"sample rate must be positive, got {self.sample_rate}")
        samples = np.array(self.samples, dtype=np.float32)
        if samples.ndim != 1 or samples.size == 0:
            raise AudioFormatError(f"clip '{self.clip_id}' must be a non-empty mono signal")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return int(self.samples.size)


def _check_riff(path: Path) -> None:
    size = os.path.getsize(path)
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise AudioFormatError(f"{path}: not a RIFF/WAVE file")
        pos = 12
        while pos + 8 <= size:
            f.seek(pos)
            chunk_id, chunk_size = struct.unpack("<4sI", f.read(8))
            if chunk_id == b"data":
                if pos + 8 + chunk_size > size:
                    raise AudioFormatError(
                        f"{path}: truncated file (data chunk declares {chunk_size} bytes, "
                        f"{size - pos - 8} present)"
                    )
                return
            pos += 8 + chunk_size + (chunk_size & 1)
    raise AudioFormatError(f"{path}: no data chunk")


def load_wav(path: str | os.PathLike, clip_id: str | None = None) -> AudioClip:
    """Read a PCM/float WAV as mono float32 in [-1, 1]; channels are averaged."""
    path = Path(path)
    try:
        info = sf.info(str(path))
    except (RuntimeError, sf.LibsndfileError) as exc:
        raise AudioFormatError(f"{path}: unreadable audio ({exc})") from exc
    if info.format != "WAV":
        raise AudioFormatError(f"{path}: container {info.format} is not WAV")
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise AudioFormatError(f"{path}: unsupported codec {info.subtype}")
    _check_riff(path)

    data, rate = sf.read(str(path), dtype="float32", always_2d=True)
    if data.shape[0] == 0:
        raise AudioFormatError(f"{path}: no samples")
    mono = data.mean(axis=1, dtype=np.float64).astype(np.float32)
    return AudioClip(mono, int(rate), clip_id if clip_id is not None else path.stem)


def write_wav(path: str | os.PathLike, clip: AudioClip, subtype: str = "PCM_16") -> Path:
    if subtype not in SUPPORTED_SUBTYPES:
        raise AudioFormatError(f"unsupported codec {subtype}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), clip.samples, clip.sample_rate, subtype=subtype, format="WAV")
    return path


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Polyphase windowed-sinc resampling to round(len * target / source) samples."""
    if target_rate <= 0:
        raise AudioFormatError(f"target rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    g = math.gcd(target_rate, clip.sample_rate)
    up, down = target_rate // g, clip.sample_rate // g
    y = resample_poly(clip.samples.astype(np.float64), up, down)
    n_out = int(round(len(clip) * target_rate / clip.sample_rate))
    if y.size < n_out:
        y = np.pad(y, (0, n_out - y.size))
    y = y[:n_out]
    if n_out == 0:
        raise AudioFormatError(f"clip '{clip.clip_id}' too short to resample to {target_rate} Hz")
    return AudioClip(y.astype(np.float32), target_rate, clip.clip_id)
