"""
Contextual and sentence embedders.

All embedders share one call shape: `embed(inputs, tape) -> Tensor[N, dim]`.
MiniEncoder is a small post-LN transformer trained with the rest of the text
model; FileEmbedder serves precomputed vectors keyed by (transcript id,
segment start), start -1 meaning the whole transcript; SentenceTransformerEmbedder
wraps a frozen sentence-transformers model.
"""
from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from core import kernels as K
from core.errors import ConfigError, EmbeddingKeyError, ShapeError, WeightFormatError
from core.shared_encoder import get_encoder
from core.tensor import GradTape, LayerParams, Tensor
from core.weights import load_weights

logger = logging.getLogger(__name__)

SENTENCE_START = -1
_EMBED_MAGIC = b"ADSE/1"


@dataclass(frozen=True)
class EncoderInput:
    ids: np.ndarray
    mask: np.ndarray
    keys: tuple[tuple[str, int], ...]
    texts: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.keys)


class Embedder(Protocol):
    dim: int

    def embed(self, inputs: EncoderInput, tape: GradTape | None = None) -> Tensor: ...

    def layers(self) -> list[LayerParams]: ...


# ── MiniEncoder ───────────────────────────────────────────────

def _dense_params(name: str, rng: np.random.Generator, d_in: int, d_out: int) -> LayerParams:
    limit = np.sqrt(6.0 / d_in)
    return LayerParams(name, {
        "weight": rng.uniform(-limit, limit, size=(d_in, d_out)).astype(np.float32),
        "bias": np.zeros(d_out, dtype=np.float32),
    })


def _norm_params(name: str, d: int) -> LayerParams:
    return LayerParams(name, {"gamma": np.ones(d, dtype=np.float32), "beta": np.zeros(d, dtype=np.float32)})


class MiniEncoder:
    """Token + learned position embeddings, post-LN blocks (MHA, 4d ReLU FFN), masked mean."""

    def __init__(
        self,
        name: str,
        vocab_size: int,
        dim: int = 128,
        num_layers: int = 2,
        heads: int = 4,
        max_len: int = 16,
        seed: int = 0,
    ):
        if dim % heads:
            raise ShapeError(f"{name}: width {dim} not divisible by {heads} heads")
        self.name = name
        self.dim = dim
        self.heads = heads
        self.max_len = max_len
        self.num_layers = num_layers
        rng = np.random.default_rng(seed)
        self.params: dict[str, LayerParams] = {}

        def add(p: LayerParams) -> None:
            self.params[p.name] = p

        add(LayerParams(f"{name}.tok", {"weight": rng.normal(0.0, 0.02, (vocab_size, dim)).astype(np.float32)}))
        add(LayerParams(f"{name}.pos", {"weight": rng.normal(0.0, 0.02, (max_len, dim)).astype(np.float32)}))
        add(_norm_params(f"{name}.emb_ln", dim))
        for b in range(num_layers):
            for proj in ("q", "k", "v", "o"):
                add(_dense_params(f"{name}.b{b}.{proj}", rng, dim, dim))
            add(_norm_params(f"{name}.b{b}.ln1", dim))
            add(_dense_params(f"{name}.b{b}.ff1", rng, dim, 4 * dim))
            add(_dense_params(f"{name}.b{b}.ff2", rng, 4 * dim, dim))
            add(_norm_params(f"{name}.b{b}.ln2", dim))

    def layers(self) -> list[LayerParams]:
        return list(self.params.values())

    def token_states(self, ids: np.ndarray, mask: np.ndarray, tape: GradTape | None = None) -> Tensor:
        """Final-layer states [N, L, dim]."""
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        n, length = ids.shape
        if length > self.max_len:
            raise ShapeError(f"{self.name}: sequence of {length} ids exceeds max length {self.max_len}")
        p = self.params
        positions = np.broadcast_to(np.arange(length), (n, length))
        x = K.add(
            K.embedding_lookup(ids, p[f"{self.name}.tok"], tape=tape),
            K.embedding_lookup(positions, p[f"{self.name}.pos"], tape=tape),
            tape=tape,
        )
        x = K.layernorm(x, p[f"{self.name}.emb_ln"], tape=tape)
        for b in range(self.num_layers):
            pre = f"{self.name}.b{b}"
            q = K.dense(x, p[f"{pre}.q"], tape=tape)
            k = K.dense(x, p[f"{pre}.k"], tape=tape)
            v = K.dense(x, p[f"{pre}.v"], tape=tape)
            a = K.dense(K.attention(q, k, v, mask, self.heads, tape=tape), p[f"{pre}.o"], tape=tape)
            x = K.layernorm(K.add(x, a, tape=tape), p[f"{pre}.ln1"], tape=tape)
            f = K.activation(K.dense(x, p[f"{pre}.ff1"], tape=tape), "relu", tape=tape)
            f = K.dense(f, p[f"{pre}.ff2"], tape=tape)
            x = K.layernorm(K.add(x, f, tape=tape), p[f"{pre}.ln2"], tape=tape)
        return x

    def encode(self, ids: np.ndarray, mask: np.ndarray, tape: GradTape | None = None) -> Tensor:
        return K.masked_mean(self.token_states(ids, mask, tape), np.asarray(mask, dtype=bool), tape=tape)

    def embed(self, inputs: EncoderInput, tape: GradTape | None = None) -> Tensor:
        return self.encode(inputs.ids, inputs.mask, tape)

    def load(self, path: str | os.PathLike, strict: bool = True) -> None:
        wf = load_weights(path)
        problems = []
        for layer in self.layers():
            stored = wf.layer(layer.name)
            for key, arr in layer.arrays.items():
                if key not in stored or stored[key].shape != arr.shape:
                    problems.append(f"{layer.name}/{key}")
                else:
                    arr[...] = stored[key]
        if problems and strict:
            raise WeightFormatError(f"{path}: missing or misshapen encoder arrays: {', '.join(problems)}")
        logger.info("[Encoder] %s loaded from %s (%d arrays skipped)", self.name, path, len(problems))


# ── FileEmbedder ──────────────────────────────────────────────

def write_embedding_file(path: str | os.PathLike, vectors: Mapping[tuple[str, int], np.ndarray]) -> Path:
    """Header "ADSE/1 <dim> <count>", then (id length, id, start, dim x f32) records."""
    items = sorted(vectors.items())
    dim = len(items[0][1]) if items else 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_EMBED_MAGIC + f" {dim} {len(items)}\n".encode("ascii"))
        for (tid, start), vec in items:
            vec = np.asarray(vec, dtype="<f4")
            if vec.shape != (dim,):
                raise ShapeError(f"embedding for ({tid}, {start}) has shape {vec.shape}, expected ({dim},)")
            raw_id = tid.encode("utf-8")
            f.write(struct.pack("<H", len(raw_id)) + raw_id + struct.pack("<i", start))
            f.write(vec.tobytes())
    return path


def read_embedding_file(path: str | os.PathLike) -> tuple[int, dict[tuple[str, int], np.ndarray]]:
    blob = Path(path).read_bytes()
    newline = blob.find(b"\n")
    head = blob[:newline].split(b" ") if newline > 0 else []
    if len(head) != 3 or head[0] != _EMBED_MAGIC:
        raise WeightFormatError(f"{path}: not an embedding file")
    dim, count = int(head[1]), int(head[2])
    pos, table = newline + 1, {}
    for _ in range(count):
        if pos + 2 > len(blob):
            raise WeightFormatError(f"{path}: truncated after {len(table)} records")
        (id_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        tid = blob[pos:pos + id_len].decode("utf-8")
        pos += id_len
        (start,) = struct.unpack_from("<i", blob, pos)
        pos += 4
        end = pos + 4 * dim
        if end > len(blob):
            raise WeightFormatError(f"{path}: truncated record ({tid}, {start})")
        table[(tid, start)] = np.frombuffer(blob[pos:end], dtype="<f4").astype(np.float32)
        pos = end
    return dim, table


class FileEmbedder:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.dim, self._table = read_embedding_file(path)

    def layers(self) -> list[LayerParams]:
        return []

    def lookup(self, key: tuple[str, int]) -> np.ndarray:
        try:
            return self._table[key]
        except KeyError:
            tid, start = key
            what = "sentence" if start == SENTENCE_START else f"segment start {start}"
            raise EmbeddingKeyError(
                f"no precomputed embedding for transcript '{tid}' ({what}) in {self.path}"
            ) from None

    def embed(self, inputs: EncoderInput, tape: GradTape | None = None) -> Tensor:
        rows = [self.lookup(key) for key in inputs.keys]
        return Tensor(np.stack(rows) if rows else np.zeros((0, self.dim)), dtype=np.float32)


# ── sentence-transformers ─────────────────────────────────────

class SentenceTransformerEmbedder:
    """Frozen sentence-transformers outputs for segment or transcript text."""

    def __init__(self, model_name: str):
        self.model_name = model_name
        self._model = get_encoder(model_name)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def layers(self) -> list[LayerParams]:
        return []

    def embed(self, inputs: EncoderInput, tape: GradTape | None = None) -> Tensor:
        vectors = self._model.encode(list(inputs.texts), convert_to_numpy=True, show_progress_bar=False)
        return Tensor(np.asarray(vectors), dtype=np.float32)


def make_embedder(
    kind: str,
    name: str,
    vocab_size: int,
    dim: int,
    num_layers: int,
    heads: int,
    max_len: int,
    seed: int,
    embedding_file: str = "",
    sbert_model: str = "",
) -> Embedder:
    if kind == "mini":
        return MiniEncoder(name, vocab_size, dim, num_layers, heads, max_len, seed)
    if kind == "file":
        if not embedding_file:
            raise ConfigError("embedder=file needs embedding_file")
        return FileEmbedder(embedding_file)
    if kind == "sbert":
        return SentenceTransformerEmbedder(sbert_model)
    raise ValueError(f"unknown embedder '{kind}'")
