"""Adam optimizer over LayerParams."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from core.errors import TrainingError
from core.tensor import LayerParams, TapeGradients

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moments of one layer plus its step counter."""

    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def check_finite(layer: str, grads: Mapping[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingError(
                f"non-finite gradient in {layer}/{name} ({bad} of {np.size(g)} entries); training aborted"
            )


def adam_step(
    params: LayerParams,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied in place to the trainable arrays of `params`.

    Every gradient is checked before any moment or parameter changes.
    """
    check_finite(params.name, grads)
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise TrainingError(
                f"gradient for {params.name}/{name} has shape {g.shape}, expected {params[name].shape}"
            )
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        arr = params[name]
        m = state.m.setdefault(name, np.zeros(arr.shape, dtype=np.float64))
        v = state.v.setdefault(name, np.zeros(arr.shape, dtype=np.float64))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g, dtype=np.float64)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        arr -= update.astype(arr.dtype, copy=False)
    return state


class Adam:
    """Holds one AdamState per layer and applies tape gradients to a set of layers."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.states: dict[str, AdamState] = {}

    def apply(self, layer: LayerParams, grads: Mapping[str, np.ndarray]) -> None:
        state = self.states.setdefault(layer.name, AdamState())
        adam_step(layer, grads, state, self.lr, self.beta1, self.beta2, self.eps)

    def step(self, layers: Iterable[LayerParams], gradients: TapeGradients) -> None:
        layers = list(layers)
        # validate everything first so a bad array never leaves a half-applied step
        for layer in layers:
            check_finite(layer.name, gradients.for_layer(layer))
        for layer in layers:
            grads = gradients.for_layer(layer)
            if grads:
                self.apply(layer, grads)
