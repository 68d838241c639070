"""
Dense tensors, layer parameters and the gradient tape.

Tensors are immutable row-major float arrays (float32 by default, float64 for
gradient checks). Layer parameters are mutable numpy arrays owned by exactly
one model; only the training loop writes to them. The tape records every
kernel applied during a forward pass and replays the backward closures in
exact reverse order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np
import numpy.typing as npt

from core.errors import ShapeError

FloatArray = npt.NDArray[np.floating]

TRAINABLE_ARRAYS = ("weight", "bias", "gamma", "beta")
_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """Immutable n-dimensional float array."""

    __slots__ = ("_data",)

    def __init__(self, data: npt.ArrayLike, dtype: npt.DTypeLike | None = None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in _FLOAT_DTYPES else np.float32
        arr = np.array(arr, dtype=dtype, copy=True)
        if arr.dtype not in _FLOAT_DTYPES:
            raise TypeError(f"Tensor dtype must be float32 or float64, got {arr.dtype}")
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt a freshly computed array without copying it."""
        t = cls.__new__(cls)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        arr.setflags(write=False)
        t._data = arr
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> np.ndarray:
        return self._data

    def astype(self, dtype: npt.DTypeLike) -> "Tensor":
        return Tensor(self._data, dtype=dtype)

    def item(self) -> float:
        return float(self._data.item())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self._data)))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __len__(self) -> int:
        return self._data.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


def as_tensor(x: "Tensor | npt.ArrayLike", dtype: npt.DTypeLike | None = None) -> Tensor:
    if isinstance(x, Tensor) and (dtype is None or x.dtype == np.dtype(dtype)):
        return x
    return Tensor(np.asarray(x), dtype=dtype)


@dataclass
class LayerParams:
    """Named parameter arrays of one layer (weight, bias, gamma, beta, running stats)."""

    name: str
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.arrays[key]
        except KeyError:
            raise ShapeError(f"layer '{self.name}' has no array '{key}'") from None

    def __contains__(self, key: str) -> bool:
        return key in self.arrays

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if k in TRAINABLE_ARRAYS}

    def parameter_count(self) -> int:
        return sum(int(v.size) for v in self.trainable().values())

    def astype(self, dtype: npt.DTypeLike) -> "LayerParams":
        return LayerParams(self.name, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def copy(self) -> "LayerParams":
        return LayerParams(self.name, {k: v.copy() for k, v in self.arrays.items()})

    def check_consistent(self) -> None:
        """Bias/beta/gamma/running stats must match the output channel extent."""
        arrays = self.arrays
        if "weight" in arrays:
            out_dim = arrays["weight"].shape[-1]
            for key in ("bias",):
                if key in arrays and arrays[key].shape != (out_dim,):
                    raise ShapeError(
                        f"{self.name}/{key} has shape {arrays[key].shape}, expected ({out_dim},)"
                    )
        if "gamma" in arrays:
            channels = arrays["gamma"].shape
            for key in ("beta", "running_mean", "running_var"):
                if key in arrays and arrays[key].shape != channels:
                    raise ShapeError(
                        f"{self.name}/{key} has shape {arrays[key].shape}, expected {channels}"
                    )


def parameter_count(layers: Iterable[LayerParams]) -> int:
    return sum(layer.parameter_count() for layer in layers)


# (input grads, param grads)
BackwardFn = Callable[[np.ndarray], "tuple[Sequence[np.ndarray | None], Mapping[str, np.ndarray]]"]


@dataclass
class TapeEntry:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    params: LayerParams | None = None


@dataclass
class TapeGradients:
    params: dict[str, dict[str, np.ndarray]]
    _inputs: dict[int, np.ndarray]
    _keep: list[Tensor]

    def wrt(self, tensor: Tensor) -> np.ndarray:
        """Gradient of the objective with respect to a recorded tensor (zeros if unused)."""
        g = self._inputs.get(id(tensor))
        if g is None:
            return np.zeros(tensor.shape, dtype=tensor.dtype)
        return g

    def for_layer(self, layer: LayerParams) -> dict[str, np.ndarray]:
        return self.params.get(layer.name, {})

    def __iter__(self) -> Iterator[tuple[str, str, np.ndarray]]:
        for layer, arrays in self.params.items():
            for name, grad in arrays.items():
                yield layer, name, grad


class GradTape:
    """Records kernel applications so the backward pass can be replayed in reverse."""

    def __init__(self) -> None:
        self._entries: list[TapeEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def ops(self) -> list[str]:
        return [e.op for e in self._entries]

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        output: Tensor,
        backward: BackwardFn,
        params: LayerParams | None = None,
    ) -> None:
        self._entries.append(TapeEntry(op, tuple(inputs), output, backward, params))

    def backward(self, output: Tensor, grad: npt.ArrayLike | None = None) -> TapeGradients:
        seed = np.ones(output.shape, dtype=output.dtype) if grad is None else np.asarray(grad)
        if seed.shape != output.shape:
            raise ShapeError(f"seed gradient shape {seed.shape} != output shape {output.shape}")

        param_grads: dict[str, dict[str, np.ndarray]] = {}
        for entry in self._entries:
            if entry.params is None:
                continue
            layer_grads = param_grads.setdefault(entry.params.name, {})
            for name, arr in entry.params.trainable().items():
                layer_grads.setdefault(name, np.zeros_like(arr))

        grads: dict[int, np.ndarray] = {id(output): seed.astype(output.dtype, copy=True)}
        for entry in reversed(self._entries):
            g_out = grads.get(id(entry.output))
            if g_out is None:
                continue
            input_grads, p_grads = entry.backward(g_out)
            for tensor, g_in in zip(entry.inputs, input_grads):
                if g_in is None:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g_in
                else:
                    grads[key] = g_in
            if entry.params is not None:
                layer_grads = param_grads[entry.params.name]
                for name, g_p in p_grads.items():
                    layer_grads[name] = layer_grads[name] + g_p

        keep = [e.output for e in self._entries] + [t for e in self._entries for t in e.inputs]
        return TapeGradients(param_grads, grads, keep)
