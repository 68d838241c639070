"""
Log-mel spectrogram features and k x 64 patching.

Framing and the mel matrix follow the VGGish recipe: 25 ms periodic-Hann
windows at a 10 ms hop on 16 kHz audio, a 512-point rfft, 64 HTK-mel bands over
125-7500 Hz and log(mel + 0.01).
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from audio.denoise import denoise_mmse_lsa
from audio.io import AudioClip, load_wav, resample
from core.errors import AudioFormatError
from core.tensor import Tensor

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WINDOW_LENGTH = 400
HOP_LENGTH = 160
FFT_LENGTH = 512
NUM_MEL_BINS = 64
MEL_MIN_HZ = 125.0
MEL_MAX_HZ = 7500.0
LOG_OFFSET = 0.01

_MEL_BREAK_FREQUENCY_HERTZ = 700.0
_MEL_HIGH_FREQUENCY_Q = 1127.0


@dataclass(frozen=True)
class LogMelPatch:
    frames: Tensor
    clip_id: str
    start: int

    @property
    def k(self) -> int:
        return self.frames.shape[0]


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hertz_to_mel(freq: np.ndarray | float) -> np.ndarray:
    return _MEL_HIGH_FREQUENCY_Q * np.log(1.0 + np.asarray(freq, dtype=np.float64) / _MEL_BREAK_FREQUENCY_HERTZ)


def mel_filterbank(
    num_mel_bins: int = NUM_MEL_BINS,
    fft_length: int = FFT_LENGTH,
    sample_rate: int = SAMPLE_RATE,
    lower_hz: float = MEL_MIN_HZ,
    upper_hz: float = MEL_MAX_HZ,
) -> np.ndarray:
    """[fft_length // 2 + 1, num_mel_bins] matrix of triangular mel weights."""
    num_bins = fft_length // 2 + 1
    bins_mel = hertz_to_mel(np.linspace(0.0, sample_rate / 2.0, num_bins))
    edges = np.linspace(hertz_to_mel(lower_hz), hertz_to_mel(upper_hz), num_mel_bins + 2)
    lower, center, upper = edges[:-2], edges[1:-1], edges[2:]
    lower_slope = (bins_mel[:, None] - lower) / (center - lower)
    upper_slope = (upper - bins_mel[:, None]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(lower_slope, upper_slope))
    weights[0, :] = 0.0
    return weights


_MEL_MATRIX = mel_filterbank()
_WINDOW = periodic_hann(WINDOW_LENGTH)


def num_frames(n_samples: int) -> int:
    return 1 + (n_samples - WINDOW_LENGTH) // HOP_LENGTH


def stft_magnitude(samples: np.ndarray) -> np.ndarray:
    """|rfft| of periodic-Hann windowed frames, shape [T, FFT_LENGTH // 2 + 1], float64."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < WINDOW_LENGTH:
        raise AudioFormatError(f"need at least {WINDOW_LENGTH} samples, got {x.size}")
    frames = sliding_window_view(x, WINDOW_LENGTH)[::HOP_LENGTH]
    return np.abs(np.fft.rfft(frames * _WINDOW, n=FFT_LENGTH, axis=-1))


def logmel_spectrogram(clip: AudioClip) -> Tensor:
    """[T, 64] log-mel features of a 16 kHz clip."""
    if clip.sample_rate != SAMPLE_RATE:
        raise AudioFormatError(
            f"clip '{clip.clip_id}' is at {clip.sample_rate} Hz; resample to {SAMPLE_RATE} Hz first"
        )
    mel = stft_magnitude(clip.samples) @ _MEL_MATRIX
    return Tensor(np.log(mel + LOG_OFFSET), dtype=np.float32)


def partition_patches(spec: Tensor, k: int, clip_id: str = "") -> list[LogMelPatch]:
    """Non-overlapping k-frame windows; the incomplete tail is dropped."""
    if spec.ndim != 2 or spec.shape[1] != NUM_MEL_BINS:
        raise AudioFormatError(f"expected [T, {NUM_MEL_BINS}] spectrogram, got {spec.shape}")
    if k < 1:
        raise AudioFormatError(f"patch length must be at least one frame, got {k}")
    count = spec.shape[0] // k
    return [
        LogMelPatch(Tensor.wrap(spec.data[i * k:(i + 1) * k]), clip_id, i * k)
        for i in range(count)
    ]


def extract_clip_features(
    path: str | os.PathLike,
    denoise: bool = False,
    alpha: float = 0.98,
    init_frames: int = 6,
    gain_floor: float = 0.1,
) -> Tensor:
    """load -> resample to 16 kHz -> optional MMSE-LSA -> log-mel."""
    clip = resample(load_wav(path), SAMPLE_RATE)
    if denoise:
        clip = denoise_mmse_lsa(clip, alpha=alpha, init_frames=init_frames, gain_floor=gain_floor)
    spec = logmel_spectrogram(clip)
    logger.debug("[Features] %s: %d samples -> %d frames", clip.clip_id, len(clip), spec.shape[0])
    return spec
