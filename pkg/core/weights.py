"""
Weight container.

Layout:
    ADSW/1 <header_len>\n
    <header_len bytes of UTF-8 JSON>
    <raw little-endian payload>

The JSON header lists every array as {layer, name, dtype, shape, offset, nbytes}
with offsets relative to the start of the payload, plus a free-form `meta`
object (model configuration, vocabularies).
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from core.errors import WeightFormatError
from core.tensor import LayerParams

logger = logging.getLogger(__name__)

MAGIC = "ADSW"
FORMAT_VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


@dataclass
class WeightFile:
    arrays: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def layer(self, name: str) -> dict[str, np.ndarray]:
        return self.arrays.get(name, {})

    def names(self) -> list[str]:
        return [f"{layer}/{key}" for layer, arrays in self.arrays.items() for key in arrays]


def _dtype_code(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "<f8"
    if arr.dtype.kind in "iu":
        return "<i8"
    return "<f4"


def save_weights(
    path: str | os.PathLike,
    layers: Iterable[LayerParams] | dict[str, dict[str, np.ndarray]],
    meta: dict[str, Any] | None = None,
) -> Path:
    """Write arrays in layer order; float32 arrays are stored bit-exactly as <f4."""
    if isinstance(layers, dict):
        items = [(lname, arrays) for lname, arrays in layers.items()]
    else:
        items = [(layer.name, layer.arrays) for layer in layers]

    entries, chunks, offset = [], [], 0
    for lname, arrays in items:
        for key, arr in arrays.items():
            code = _dtype_code(arr)
            raw = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
            entries.append({
                "layer": lname, "name": key, "dtype": code,
                "shape": list(arr.shape), "offset": offset, "nbytes": len(raw),
            })
            chunks.append(raw)
            offset += len(raw)

    header = json.dumps(
        {"format_version": FORMAT_VERSION, "arrays": entries, "meta": meta or {}},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(f"{MAGIC}/{FORMAT_VERSION} {len(header)}\n".encode("ascii"))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)
    os.replace(tmp, path)
    logger.debug("[Weights] wrote %d arrays (%d bytes) to %s", len(entries), offset, path)
    return path


def load_weights(path: str | os.PathLike) -> WeightFile:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise WeightFormatError(f"cannot read weight file {path}: {exc}") from exc

    newline = blob.find(b"\n")
    if newline < 0:
        raise WeightFormatError(f"{path}: missing container preamble")
    try:
        tag, header_len = blob[:newline].decode("ascii").split(" ")
        header_len = int(header_len)
    except ValueError:
        raise WeightFormatError(f"{path}: malformed container preamble") from None
    if tag != f"{MAGIC}/{FORMAT_VERSION}":
        raise WeightFormatError(f"{path}: unsupported container tag '{tag}'")

    start = newline + 1
    if start + header_len > len(blob):
        raise WeightFormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: corrupt header ({exc})") from exc

    payload = memoryview(blob)[start + header_len:]
    out = WeightFile(meta=header.get("meta", {}))
    for entry in header.get("arrays", []):
        code = entry["dtype"]
        if code not in _DTYPES:
            raise WeightFormatError(f"{path}: {entry['layer']}/{entry['name']} has unsupported dtype {code}")
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(payload):
            raise WeightFormatError(f"{path}: payload truncated at {entry['layer']}/{entry['name']}")
        shape = tuple(entry["shape"])
        arr = np.frombuffer(payload[lo:hi], dtype=_DTYPES[code])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise WeightFormatError(f"{path}: {entry['layer']}/{entry['name']} size does not match shape {shape}")
        arr = arr.reshape(shape).astype(arr.dtype.newbyteorder("="))
        out.arrays.setdefault(entry["layer"], {})[entry["name"]] = arr
    return out
