"""
Run configuration.

Precedence, lowest first: field defaults, config file(s), ADSCREEN_* environment
variables, command-line flags. Config files are flat `key = value` text read
with python-dotenv; an `include` key pulls in other files first.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from dotenv import dotenv_values

from core.errors import ConfigError

ENV_PREFIX = "ADSCREEN_"

CHOICES: dict[str, tuple[str, ...]] = {
    "segment": ("short", "long"),
    "source": ("manual", "asr"),
    "embedder": ("mini", "file", "sbert"),
    "denoise": ("auto", "on", "off"),
    "speaker_filter": ("auto", "participant", "all"),
}

SEGMENT_FRAMES = {"short": 96, "long": 496}


def _opt(default: Any, doc: str) -> Any:
    return field(default=default, metadata={"doc": doc})


@dataclass(frozen=True)
class RunConfig:
    # corpus / pipeline
    manifest: str = _opt("", "CSV manifest of subjects")
    out_dir: str = _opt("runs/latest", "directory receiving every artifact of a run")
    cache_dir: str = _opt(".adscreen_cache", "log-mel feature cache directory")
    segment: str = _opt("short", "audio segment kind: short (96 frames) or long (496 frames)")
    source: str = _opt("manual", "transcript source: manual or asr")
    speaker_filter: str = _opt("auto", "CHAT speaker tiers: participant, all, or auto (participant for manual)")
    denoise: str = _opt("auto", "MMSE-LSA denoising: on, off, or auto (on for the asr pathway)")
    seed: int = _opt(0, "master seed for initialization, splits and resampling")
    jobs: int = _opt(1, "worker count; 1 is fully serial")
    synth_duration: float = _opt(10.0, "seconds of audio per synthetic subject")

    # evaluation
    folds: int = _opt(10, "cross-validation folds")
    threshold: float = _opt(0.5, "decision threshold; p >= threshold means AD")
    fusion_weights: tuple = _opt((0.0, 1.0, 1.5, 2.0, 1e14), "late-fusion weights w swept by fuse/evaluate")
    bootstrap_samples: int = _opt(1000, "bootstrap resamples per confidence interval")
    ci_level: float = _opt(0.95, "confidence level of bootstrap intervals")

    # shared training
    val_fraction: float = _opt(0.1, "fraction of training subjects held out for early stopping")
    bn_momentum: float = _opt(0.99, "batch-norm running average momentum")
    bn_epsilon: float = _opt(1e-3, "batch-norm epsilon")
    bce_eps: float = _opt(1e-7, "prediction clamp of the cross-entropy loss")

    # audio branch
    audio_lr: float = _opt(1e-6, "audio learning rate")
    audio_batch: int = _opt(32, "audio mini-batch size")
    audio_epochs: int = _opt(100, "maximum audio training epochs")
    audio_patience: int = _opt(30, "audio early-stopping patience")
    audio_freeze_backbone: bool = _opt(False, "train only batch-norm and head layers")
    audio_width_divisor: int = _opt(1, "divide every conv/dense width by this factor")
    audio_backbone: str = _opt("", "weight file with pre-trained conv layers")
    audio_max_patches: int = _opt(0, "cap on patches per clip during training (0 = all)")
    denoise_alpha: float = _opt(0.98, "decision-directed smoothing of the a-priori SNR")
    denoise_init_frames: int = _opt(6, "leading frames used to initialise the noise PSD")
    denoise_gain_floor: float = _opt(0.1, "lower clamp of the spectral gain")

    # text branch
    text_lr: float = _opt(1e-6, "text learning rate")
    text_batch: int = _opt(32, "text mini-batch size")
    text_epochs: int = _opt(100, "maximum text training epochs")
    text_patience: int = _opt(30, "text early-stopping patience")
    freeze_wordvecs: bool = _opt(False, "keep word vectors fixed")
    freeze_cnn: bool = _opt(False, "keep the word-vector CNN branch fixed")
    freeze_encoders: bool = _opt(False, "keep both transformer encoders fixed")
    embedder: str = _opt("mini", "contextual/sentence embedder: mini, file, or sbert")
    embedding_file: str = _opt("", "precomputed embeddings for embedder=file")
    sbert_model: str = _opt("all-MiniLM-L6-v2", "sentence-transformers model for embedder=sbert")
    encoder_weights: str = _opt("", "weight file for the contextual/sentence encoders")
    wordvec_file: str = _opt("", "word vectors in text format; random stand-in when empty")
    wordvec_dim: int = _opt(300, "word-vector dimension")
    wordvec_subwords: bool = _opt(True, "character n-gram fallback for unseen tokens")
    vocab_file: str = _opt("", "WordPiece vocabulary; built from training text when empty")
    vocab_size: int = _opt(2000, "target size of a generated WordPiece vocabulary")
    max_tokens: int = _opt(8, "rows of the segment word-vector matrix")
    subword_max_len: int = _opt(16, "subword ids per segment including [CLS]/[SEP]")
    sentence_max_len: int = _opt(256, "subword pieces kept for the sentence encoder")
    encoder_layers: int = _opt(2, "transformer blocks per encoder")
    encoder_heads: int = _opt(4, "attention heads")
    context_dim: int = _opt(128, "contextual embedding width d_c")
    sentence_dim: int = _opt(128, "sentence embedding width d_s")
    cnn_widths: tuple = _opt((2, 3, 4), "CNN filter widths")
    cnn_filters: int = _opt(32, "filters per CNN width")
    cnn_out: int = _opt(64, "CNN branch embedding width")

    def __post_init__(self) -> None:
        for key, allowed in CHOICES.items():
            value = getattr(self, key)
            if value not in allowed:
                raise ConfigError(f"{key} must be one of {', '.join(allowed)}; got '{value}'")
        if any(w < 0 for w in self.fusion_weights):
            raise ConfigError("fusion_weights must be non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.jobs < 1 or self.folds < 2:
            raise ConfigError("jobs must be >= 1 and folds >= 2")
        if self.max_tokens < 7:
            raise ConfigError("max_tokens must be at least the segment length 7")
        if self.synth_duration <= 0:
            raise ConfigError("synth_duration must be positive")
        if self.audio_width_divisor < 1:
            raise ConfigError("audio_width_divisor must be >= 1")

    # ── derived values ────────────────────────────────────────

    @property
    def patch_frames(self) -> int:
        return SEGMENT_FRAMES[self.segment]

    @property
    def use_denoise(self) -> bool:
        return self.denoise == "on" or (self.denoise == "auto" and self.source == "asr")

    @property
    def participant_only(self) -> bool:
        if self.speaker_filter == "auto":
            return self.source == "manual"
        return self.speaker_filter == "participant"

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def to_env_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"# {f.metadata['doc']}")
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def docs(cls) -> dict[str, str]:
        return {f.name: f.metadata["doc"] for f in fields(cls)}

    @classmethod
    def from_sources(
        cls,
        config_path: str | os.PathLike | None = None,
        environ: Mapping[str, str] | None = None,
        overrides: Mapping[str, Any] | None = None,
    ) -> "RunConfig":
        values: dict[str, Any] = {}
        if config_path:
            values.update(parse_values(load_config_file(config_path)))
        values.update(parse_values(env_values(os.environ if environ is None else environ)))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(**values)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


_DEFAULTS = {f.name: f.default for f in fields(RunConfig)}


def _coerce(key: str, raw: Any) -> Any:
    if key not in _DEFAULTS:
        raise ConfigError(f"unknown configuration key '{key}'")
    default = _DEFAULTS[key]
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"invalid value for {key}: '{raw}'") from None
    return text


def parse_values(raw: Mapping[str, Any]) -> dict[str, Any]:
    return {key: _coerce(key, value) for key, value in raw.items()}


def load_config_file(path: str | os.PathLike, _stack: tuple[Path, ...] = ()) -> dict[str, str]:
    """Flatten a config file and its includes into raw string values."""
    path = Path(path).resolve()
    if path in _stack:
        chain = " -> ".join(str(p) for p in _stack + (path,))
        raise ConfigError(f"include cycle: {chain}")
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")

    own = {k: v for k, v in dotenv_values(path).items()}
    merged: dict[str, str] = {}
    includes = own.pop("include", None) or ""
    for name in (part.strip() for part in includes.split(",")):
        if name:
            merged.update(load_config_file(path.parent / name, _stack + (path,)))
    for key, value in own.items():
        if value is None:
            raise ConfigError(f"{path}: key '{key}' has no value")
        merged[key] = value
    return merged


def env_values(environ: Mapping[str, str]) -> dict[str, str]:
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name not in _DEFAULTS:
                raise ConfigError(f"unknown configuration key '{name}' (from environment {key})")
            out[name] = value
    return out
