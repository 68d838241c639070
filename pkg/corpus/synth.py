"""
Synthetic desk-scale corpus.

AD subjects get longer pauses and band-limited noise bursts in their audio,
and transcripts with dense fillers and broken repetitions. Manual transcripts
are CHAT files with investigator and participant tiers; ASR transcripts are
lower-cased plain text without punctuation that keep the investigator's
prompts and lose most fillers.
"""
from __future__ import annotations

import logging
import os
from pathlib import Path

import numpy as np
from scipy import signal

from audio.io import AudioClip, write_wav
from corpus.manifest import Manifest, SubjectRecord, ingest_manifest, write_manifest
from fusion.subgroups import AGE_BINS

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
AGE_FRACTIONS = (32 / 477, 154 / 477, 193 / 477, 88 / 477, 10 / 477)
GENDER_FRACTIONS = (310 / 477, 167 / 477)
SYNTH_DURATION = 10.0
FILLER_DENSITY = {1: 0.4, 0: 0.05}
ASR_FILLER_KEEP = 0.3
FILLERS = ("uh", "um", "er", "hm")

PROMPTS = (
    "tell me everything you see going on in this picture",
    "anything else",
    "what else is happening",
    "good, is there anything more",
)
SUBJECTS = ("the boy", "the girl", "the mother", "the little boy", "the woman", "the kid")
ACTIONS = (
    "is taking cookies from the jar",
    "is standing on the stool",
    "is washing the dishes",
    "is reaching for the cookie jar",
    "is drying a plate",
    "is asking for a cookie",
    "is falling off the stool",
    "is looking out the window",
)
SCENE = (
    "the water is running over the sink",
    "the curtains are open",
    "there are cups on the counter",
    "the stool is tipping over",
    "the window is open",
    "it is a nice day outside",
)


def allocate_counts(fractions: tuple[float, ...], n: int) -> list[int]:
    """Largest-remainder split of n into len(fractions) integer counts; ties go to the earlier share."""
    quotas = np.asarray(fractions) * n
    counts = np.floor(quotas).astype(int)
    for i in np.argsort(-(quotas - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return [int(c) for c in counts]


def _age_allocation(n: int, rng: np.random.Generator) -> list[int]:
    counts = allocate_counts(AGE_FRACTIONS, n)
    ages = [int(rng.integers(lo, hi + 1)) for (lo, hi), c in zip(AGE_BINS, counts) for _ in range(c)]
    return [ages[i] for i in rng.permutation(n)]


def _gender_allocation(n: int, rng: np.random.Generator) -> list[str]:
    female, male = allocate_counts(GENDER_FRACTIONS, n)
    genders = ["female"] * female + ["male"] * male
    return [genders[i] for i in rng.permutation(n)]


def _utterances(label: int, rng: np.random.Generator, count: int) -> list[list[str]]:
    out = []
    for _ in range(count):
        if rng.random() < 0.7:
            text = f"{SUBJECTS[rng.integers(len(SUBJECTS))]} {ACTIONS[rng.integers(len(ACTIONS))]}"
        else:
            text = SCENE[rng.integers(len(SCENE))]
        out.append(text.split())
    return out


def _participant_tier(words: list[str], label: int, rng: np.random.Generator) -> list[str]:
    """Words with CHAT fillers (&uh) and, for AD, retraced repetitions (the [/] the)."""
    tier: list[str] = []
    for word in words:
        if rng.random() < FILLER_DENSITY[label]:
            tier.append("&" + FILLERS[rng.integers(len(FILLERS))])
        if label == 1 and rng.random() < 0.15:
            tier.extend([word, "[/]"])
        tier.append(word)
    return tier


def _chat_text(subject_id: str, lines: list[tuple[str, list[str]]]) -> str:
    head = ["@UTF8", "@Begin", "@Languages:\teng", f"@ID:\teng|synthetic|PAR|||||Participant|||{subject_id}|"]
    body = [f"*{speaker}:\t{' '.join(words)} ." for speaker, words in lines]
    return "\n".join(head + body + ["@End"]) + "\n"


def _asr_text(lines: list[tuple[str, list[str]]], rng: np.random.Generator) -> str:
    words: list[str] = []
    for _speaker, tier in lines:
        for w in tier:
            if w == "[/]":
                continue
            if w.startswith("&"):
                if rng.random() < ASR_FILLER_KEEP:
                    words.append(w[1:])
                continue
            words.append(w.lower().strip(",.?"))
    return " ".join(w for w in words if w) + "\n"


def _tone(duration: float, f0: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(int(duration * SAMPLE_RATE)) / SAMPLE_RATE
    wave = sum((0.5 / h) * np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) for h in range(1, 6))
    envelope = np.sin(np.pi * np.linspace(0.0, 1.0, t.size)) ** 0.5
    return 0.3 * wave * envelope


def synth_audio(label: int, duration: float, rng: np.random.Generator) -> np.ndarray:
    """Voiced 'syllables' separated by pauses; AD adds long pauses and 2-4 kHz noise bursts."""
    n = int(duration * SAMPLE_RATE)
    out = np.zeros(n)
    f0 = rng.uniform(110.0, 220.0)
    burst_sos = signal.butter(4, [2000.0, 4000.0], btype="bandpass", fs=SAMPLE_RATE, output="sos")
    pos = int(rng.uniform(0.05, 0.15) * SAMPLE_RATE)
    while pos < n:
        syl = _tone(rng.uniform(0.15, 0.3), f0 * rng.uniform(0.9, 1.1), rng)
        end = min(pos + syl.size, n)
        out[pos:end] += syl[: end - pos]
        pos = end
        if label == 1 and rng.random() < 0.5:
            burst_len = int(rng.uniform(0.1, 0.25) * SAMPLE_RATE)
            burst = signal.sosfilt(burst_sos, rng.normal(0.0, 0.4, burst_len))
            end = min(pos + burst_len, n)
            out[pos:end] += burst[: end - pos]
            pos = end
        pause = rng.uniform(0.3, 0.7) if label == 1 else rng.uniform(0.05, 0.12)
        pos += int(pause * SAMPLE_RATE)
    out += rng.normal(0.0, 0.003, n)
    return np.clip(out, -0.99, 0.99).astype(np.float32)


def synth_corpus(
    n_subjects: int,
    seed: int,
    out_dir: str | os.PathLike,
    duration: float = SYNTH_DURATION,
    utterances: int = 8,
) -> Manifest:
    if n_subjects < 4:
        raise ValueError(f"a synthetic corpus needs at least 4 subjects, got {n_subjects}")
    out = Path(out_dir)
    for sub in ("audio", "transcripts", "asr"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    labels = rng.permutation([1] * ((n_subjects + 1) // 2) + [0] * (n_subjects // 2))
    ages = _age_allocation(n_subjects, rng)
    genders = _gender_allocation(n_subjects, rng)

    records = []
    for i in range(n_subjects):
        sid = f"S{i + 1:03d}"
        label = int(labels[i])
        srng = np.random.default_rng([seed, i])

        lines: list[tuple[str, list[str]]] = [("INV", PROMPTS[0].split())]
        for j, words in enumerate(_utterances(label, srng, utterances)):
            lines.append(("PAR", _participant_tier(words, label, srng)))
            if j % 3 == 2:
                lines.append(("INV", PROMPTS[1 + srng.integers(len(PROMPTS) - 1)].split()))

        wav = out / "audio" / f"{sid}.wav"
        cha = out / "transcripts" / f"{sid}.cha"
        asr = out / "asr" / f"{sid}.txt"
        write_wav(wav, AudioClip(synth_audio(label, duration, srng), SAMPLE_RATE, sid))
        cha.write_text(_chat_text(sid, lines), encoding="utf-8")
        asr.write_text(_asr_text(lines, srng), encoding="utf-8")
        records.append(SubjectRecord(sid, label, ages[i], genders[i], wav, cha, asr, "synthetic"))

    path = write_manifest(out / "manifest.csv", records)
    logger.info("[Synth] %d subjects (%d AD) written to %s", n_subjects, int(labels.sum()), out)
    return ingest_manifest(path)
