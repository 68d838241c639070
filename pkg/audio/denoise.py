"""
MMSE log-spectral amplitude speech enhancement.

Frames of 20 ms with 50% overlap are analysed with a periodic Hann window
(which overlap-adds to one) and resynthesised by plain overlap-add. The noise
PSD starts as the mean power of the first frames and afterwards follows a
VAD-gated recursive update. The a-priori SNR is decision-directed.
"""
from __future__ import annotations

import numpy as np
from scipy.special import exp1

from audio.io import AudioClip
from core.errors import AudioFormatError

XI_MIN = 10 ** (-25 / 10)
MAX_POST_SNR = 40.0
NOISE_SMOOTHING = 0.98
VAD_THRESHOLD = 0.15
NOISE_FLOOR = 1e-20


def frame_length(sample_rate: int, frame_ms: float = 20.0) -> int:
    n = int(np.floor(frame_ms * sample_rate / 1000.0))
    return n + (n % 2)


def lsa_gain(xi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """G = xi / (1 + xi) * exp(0.5 * E1(v)), v = xi * gamma / (1 + xi)."""
    v = np.maximum(xi * gamma / (1.0 + xi), 1e-10)
    return xi / (1.0 + xi) * np.exp(0.5 * exp1(v))


def denoise_mmse_lsa(
    clip: AudioClip,
    alpha: float = 0.98,
    init_frames: int = 6,
    gain_floor: float = 0.1,
    frame_ms: float = 20.0,
) -> AudioClip:
    x = clip.samples.astype(np.float64)
    n = x.size
    length = frame_length(clip.sample_rate, frame_ms)
    if n < length:
        raise AudioFormatError(
            f"clip '{clip.clip_id}' has {n} samples, shorter than one {length}-sample analysis frame"
        )
    hop = length // 2
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)

    # every input sample is covered by exactly two frames
    n_frames = -(-(n + hop) // hop)
    padded = np.zeros((n_frames + 1) * hop)
    padded[hop:hop + n] = x

    spectra = np.fft.rfft(
        np.stack([padded[i * hop:i * hop + length] for i in range(n_frames)]) * window, axis=-1
    )
    power = np.abs(spectra) ** 2
    # the first frame is half padding; estimate noise from frames that start inside the clip
    init = power[1:1 + init_frames] if n_frames > 1 else power[:1]
    noise = np.maximum(init.mean(axis=0), NOISE_FLOOR)

    out = np.zeros_like(padded)
    prev_clean = None
    for i in range(n_frames):
        gamma = np.minimum(power[i] / noise, MAX_POST_SNR)
        if prev_clean is None:
            xi = alpha + (1.0 - alpha) * np.maximum(gamma - 1.0, 0.0)
        else:
            xi = alpha * prev_clean / noise + (1.0 - alpha) * np.maximum(gamma - 1.0, 0.0)
        xi = np.maximum(xi, XI_MIN)

        log_sigma = gamma * xi / (1.0 + xi) - np.log1p(xi)
        if np.mean(log_sigma) < VAD_THRESHOLD:
            noise = np.maximum(
                NOISE_SMOOTHING * noise + (1.0 - NOISE_SMOOTHING) * power[i],
                NOISE_FLOOR,
            )

        gain = np.clip(lsa_gain(xi, gamma), gain_floor, 1.0)
        prev_clean = power[i] * gain ** 2
        out[i * hop:i * hop + length] += np.fft.irfft(spectra[i] * gain, n=length)

    return AudioClip(out[hop:hop + n].astype(np.float32), clip.sample_rate, clip.clip_id)
