"""
Finite-difference verification of tape gradients.

The checked fragment is any callable `fn(inputs, tape) -> Tensor` built from
core.kernels. The scalar objective is sum(out * R) for a seeded random R, so
every output element contributes. Each trainable array is probed with central
differences and compared to the analytic gradient by a norm-relative error.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from core.tensor import GradTape, LayerParams, Tensor

logger = logging.getLogger(__name__)

Fragment = Callable[[list[Tensor], "GradTape | None"], Tensor]


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    def failures(self) -> dict[str, float]:
        return {k: e for k, e in self.errors.items() if e > self.tolerance}

    def __str__(self) -> str:
        lines = [f"grad check (tol {self.tolerance:g}): {'PASS' if self.passed else 'FAIL'}"]
        for key, err in self.errors.items():
            flag = "" if err <= self.tolerance else "  <-- FAIL"
            lines.append(f"  {key:<28} {err:.3e}{flag}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(diff / scale)


def grad_check(
    fn: Fragment,
    inputs: Sequence[np.ndarray],
    layers: Sequence[LayerParams],
    rel_tolerance: float = 1e-4,
    h: float = 1e-5,
    seed: int = 0,
    max_elements: int | None = None,
    check_inputs: bool = False,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients for every trainable array.

    Layer arrays are promoted to float64 in place. Non-trainable arrays (batch
    norm running statistics) are restored after every forward evaluation.
    """
    for layer in layers:
        for key, arr in list(layer.arrays.items()):
            if arr.dtype != np.float64:
                layer.arrays[key] = arr.astype(np.float64)
    xs = [np.array(x, dtype=np.float64) for x in inputs]
    rng = np.random.default_rng(seed)

    frozen = {
        (layer.name, key): arr.copy()
        for layer in layers
        for key, arr in layer.arrays.items()
        if key not in layer.trainable()
    }

    def restore() -> None:
        for layer in layers:
            for key in layer.arrays:
                saved = frozen.get((layer.name, key))
                if saved is not None:
                    layer.arrays[key][...] = saved

    tape = GradTape()
    in_tensors = [Tensor(x, dtype=np.float64) for x in xs]
    out = fn(in_tensors, tape)
    projection = rng.standard_normal(out.shape)
    grads = tape.backward(out, projection)
    restore()

    def objective() -> float:
        value = fn([Tensor(x, dtype=np.float64) for x in xs], None)
        restore()
        return float(np.sum(value.data * projection))

    def probe(target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = target.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = objective()
            flat[i] = orig - h
            f_minus = objective()
            flat[i] = orig
            numeric[j] = (f_plus - f_minus) / (2.0 * h)
        return idx, numeric

    report = GradCheckReport(tolerance=rel_tolerance)
    for layer in layers:
        analytic_layer = grads.for_layer(layer)
        for key, arr in layer.trainable().items():
            idx, numeric = probe(arr)
            analytic = analytic_layer.get(key, np.zeros_like(arr)).reshape(-1)[idx]
            report.errors[f"{layer.name}/{key}"] = relative_error(analytic, numeric)

    if check_inputs:
        for i, (x, t) in enumerate(zip(xs, in_tensors)):
            idx, numeric = probe(x)
            analytic = grads.wrt(t).reshape(-1)[idx]
            report.errors[f"input{i}"] = relative_error(analytic, numeric)

    restore()
    logger.debug("[GradCheck] %s", report)
    return report
