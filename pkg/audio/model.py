"""
m-VGGish: VGGish convolutional blocks with batch norm, global average pooling
and a 512 -> 512 -> 2 softmax head. Column 0 of the softmax is the AD class.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from core import kernels as K
from core.errors import ShapeError, WeightFormatError
from core.tensor import GradTape, LayerParams, Tensor, parameter_count
from core.weights import load_weights, save_weights

logger = logging.getLogger(__name__)

CONV_BLOCKS: tuple[tuple[int, ...], ...] = ((64,), (128,), (256, 256), (512, 512))
EMBEDDING_DIM = 512
MIN_FRAMES = 16
AD_COLUMN = 0


@dataclass(frozen=True)
class AudioPrediction:
    clip_id: str
    patch_probs: tuple[float, ...]
    p_a: float


@dataclass
class MVGGish:
    layers: dict[str, LayerParams]
    width_divisor: int = 1
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-3
    seed: int = 0
    conv_names: list[str] = field(default_factory=list)

    # ── structure ─────────────────────────────────────────────

    def parameters(self) -> list[LayerParams]:
        return list(self.layers.values())

    def parameter_count(self) -> int:
        return parameter_count(self.layers.values())

    def backbone(self) -> list[LayerParams]:
        return [self.layers[n] for n in self.layers if n.startswith(("conv", "bn"))]

    def head(self) -> list[LayerParams]:
        return [self.layers["fc1"], self.layers["fc2"]]

    def norm_layers(self) -> list[LayerParams]:
        return [self.layers[n] for n in self.layers if n.startswith("bn")]

    def config(self) -> dict[str, Any]:
        return {
            "kind": "mvggish",
            "width_divisor": self.width_divisor,
            "bn_momentum": self.bn_momentum,
            "bn_epsilon": self.bn_epsilon,
            "seed": self.seed,
        }

    # ── forward ───────────────────────────────────────────────

    def embed(
        self,
        x: Tensor,
        mode: K.Mode = "infer",
        tape: GradTape | None = None,
        update_stats: bool = True,
    ) -> Tensor:
        """[N, k, 64] or [N, k, 64, 1] patches -> [N, 512 / width_divisor] pooled embedding."""
        if x.ndim == 3:
            x = K.reshape(x, x.shape + (1,), tape=tape)
        if x.ndim != 4 or x.shape[2] != 64 or x.shape[3] != 1:
            raise ShapeError(f"m-VGGish expects [N, k, 64] patches, got {x.shape}")
        if x.shape[1] < MIN_FRAMES:
            raise ShapeError(f"patch has {x.shape[1]} frames; at least {MIN_FRAMES} survive the four pools")
        h = x
        idx = 1
        for block in CONV_BLOCKS:
            for _ in block:
                h = K.conv2d(h, self.layers[f"conv{idx}"], stride=1, padding="same", tape=tape)
                h = K.batchnorm(
                    h, self.layers[f"bn{idx}"], mode=mode, epsilon=self.bn_epsilon,
                    momentum=self.bn_momentum, update_stats=update_stats, tape=tape,
                )
                h = K.activation(h, "relu", tape=tape)
                idx += 1
            h = K.maxpool2d(h, 2, 2, tape=tape)
        return K.global_avg_pool(h, tape=tape)

    def forward(
        self,
        x: Tensor,
        mode: K.Mode = "infer",
        tape: GradTape | None = None,
        update_stats: bool = True,
    ) -> Tensor:
        """Softmax class probabilities [N, 2]."""
        h = self.embed(x, mode=mode, tape=tape, update_stats=update_stats)
        h = K.activation(K.dense(h, self.layers["fc1"], tape=tape), "relu", tape=tape)
        return K.softmax(K.dense(h, self.layers["fc2"], tape=tape), tape=tape)

    def ad_probability(
        self,
        x: Tensor,
        mode: K.Mode = "infer",
        tape: GradTape | None = None,
        update_stats: bool = True,
    ) -> Tensor:
        return K.select_column(self.forward(x, mode, tape, update_stats), AD_COLUMN, tape=tape)


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def build_mvggish(
    seed: int = 0,
    width_divisor: int = 1,
    bn_momentum: float = 0.99,
    bn_epsilon: float = 1e-3,
) -> MVGGish:
    rng = np.random.default_rng(seed)
    layers: dict[str, LayerParams] = {}
    conv_names = []
    c_in, idx = 1, 1
    for block in CONV_BLOCKS:
        for width in block:
            c_out = max(width // width_divisor, 1)
            name = f"conv{idx}"
            layers[name] = LayerParams(name, {
                "weight": _he_uniform(rng, (3, 3, c_in, c_out), 9 * c_in),
                "bias": np.zeros(c_out, dtype=np.float32),
            })
            layers[f"bn{idx}"] = LayerParams(f"bn{idx}", {
                "gamma": np.ones(c_out, dtype=np.float32),
                "beta": np.zeros(c_out, dtype=np.float32),
                "running_mean": np.zeros(c_out, dtype=np.float32),
                "running_var": np.ones(c_out, dtype=np.float32),
            })
            conv_names.append(name)
            c_in, idx = c_out, idx + 1
    hidden = max(EMBEDDING_DIM // width_divisor, 1)
    layers["fc1"] = LayerParams("fc1", {
        "weight": _he_uniform(rng, (c_in, hidden), c_in),
        "bias": np.zeros(hidden, dtype=np.float32),
    })
    layers["fc2"] = LayerParams("fc2", {
        "weight": _he_uniform(rng, (hidden, 2), hidden),
        "bias": np.zeros(2, dtype=np.float32),
    })
    model = MVGGish(layers, width_divisor, bn_momentum, bn_epsilon, seed, conv_names)
    logger.info("[Audio] built m-VGGish (divisor %d): %s parameters", width_divisor, f"{model.parameter_count():,}")
    return model


# ── weights ───────────────────────────────────────────────────

def load_backbone(model: MVGGish, path: str | os.PathLike, strict: bool = False) -> MVGGish:
    """Copy matching conv/bn arrays from a weight file; head layers are never touched."""
    wf = load_weights(path)
    problems, loaded = [], []
    backbone = {layer.name: layer for layer in model.backbone()}
    for lname, arrays in wf.arrays.items():
        layer = backbone.get(lname)
        for key, arr in arrays.items():
            tag = f"{lname}/{key}"
            if layer is None or key not in layer:
                problems.append(f"{tag} (not a backbone array)")
            elif layer[key].shape != arr.shape:
                problems.append(f"{tag} (file {arr.shape}, model {layer[key].shape})")
            else:
                loaded.append((layer, key, arr))
    if problems and strict:
        raise WeightFormatError(f"backbone mismatch in {path}: " + "; ".join(problems))
    for problem in problems:
        logger.warning("[Audio] skipped %s", problem)
    for layer, key, arr in loaded:
        layer.arrays[key][...] = arr
    logger.info("[Audio] loaded %d backbone arrays from %s", len(loaded), path)
    return model


def save_model(model: MVGGish, path: str | os.PathLike) -> None:
    save_weights(path, model.parameters(), meta=model.config())


def load_model(path: str | os.PathLike) -> MVGGish:
    wf = load_weights(path)
    meta = wf.meta
    if meta.get("kind") != "mvggish":
        raise WeightFormatError(f"{path} does not hold an m-VGGish model")
    model = build_mvggish(
        seed=int(meta.get("seed", 0)),
        width_divisor=int(meta.get("width_divisor", 1)),
        bn_momentum=float(meta.get("bn_momentum", 0.99)),
        bn_epsilon=float(meta.get("bn_epsilon", 1e-3)),
    )
    for layer in model.parameters():
        stored = wf.layer(layer.name)
        for key in layer.arrays:
            if key not in stored or stored[key].shape != layer[key].shape:
                raise WeightFormatError(f"{path}: missing or misshapen {layer.name}/{key}")
            layer.arrays[key][...] = stored[key]
    return model


# ── inference ─────────────────────────────────────────────────

def predict_patches(model: MVGGish, patches: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """AD probabilities of [N, k, 64] patches in inference mode."""
    patches = np.asarray(patches, dtype=np.float32)
    if patches.ndim != 3:
        raise ShapeError(f"expected [N, k, 64] patches, got {patches.shape}")
    out = np.empty(patches.shape[0], dtype=np.float64)
    for start in range(0, patches.shape[0], batch_size):
        batch = Tensor(patches[start:start + batch_size])
        p = model.ad_probability(batch, mode="infer").data.astype(np.float64)
        out[start:start + batch.shape[0]] = p
    return np.clip(out, np.finfo(np.float32).tiny, np.nextafter(np.float32(1), np.float32(0)))


def predict_segment(model: MVGGish, patch: Any) -> float:
    frames = patch.frames if hasattr(patch, "frames") else patch
    return float(predict_patches(model, np.asarray(frames)[None])[0])


def aggregate_audio(predictions: Sequence[float]) -> float:
    if len(predictions) == 0:
        raise ValueError("no audio segments to aggregate (clip shorter than one patch)")
    return float(np.mean(np.asarray(predictions, dtype=np.float64)))


def predict_clip(model: MVGGish, patches: np.ndarray, clip_id: str = "") -> AudioPrediction:
    probs = predict_patches(model, patches) if len(patches) else np.empty(0)
    return AudioPrediction(clip_id, tuple(float(p) for p in probs), aggregate_audio(probs))
