"""
Neural-network kernels over NHWC tensors.

Every kernel is a pure function of its inputs (batchnorm in train mode also
folds the batch statistics into the layer's running averages). When a
GradTape is passed the kernel records a backward closure on it.
"""
from __future__ import annotations

import math
from typing import Literal, Sequence

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from core.errors import ShapeError
from core.tensor import GradTape, LayerParams, Tensor, as_tensor

Padding = Literal["same", "valid"]
Mode = Literal["train", "infer"]

MASK_FILL = -1e9


def _record(tape, op, inputs, out, backward, params=None):
    if tape is not None:
        tape.record(op, inputs, out, backward, params)
    return out


def _param(params: LayerParams, key: str, dtype: np.dtype) -> np.ndarray:
    return params[key].astype(dtype, copy=False)


def _open_unit_interval(p: np.ndarray) -> np.ndarray:
    lo = np.finfo(p.dtype).tiny
    hi = np.nextafter(p.dtype.type(1), p.dtype.type(0))
    return np.clip(p, lo, hi)


def _same_pads(size: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


# ── Convolution / pooling ─────────────────────────────────────

def conv2d(
    x: Tensor | npt.ArrayLike,
    params: LayerParams,
    stride: int = 1,
    padding: Padding = "same",
    tape: GradTape | None = None,
) -> Tensor:
    """Cross-correlation of x[N,H,W,Cin] with weight[kh,kw,Cin,Cout] plus bias."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"conv2d '{params.name}' expects [N,H,W,C] input, got {x.shape}")
    weight = _param(params, "weight", x.dtype)
    n, h, w, cin = x.shape
    kh, kw, w_cin, cout = weight.shape
    if cin != w_cin:
        raise ShapeError(
            f"conv2d '{params.name}': input has {cin} channels but kernel expects {w_cin} "
            f"(input {x.shape}, kernel {weight.shape})"
        )
    if padding == "same":
        ph, pw = _same_pads(h, kh, stride), _same_pads(w, kw, stride)
    elif padding == "valid":
        ph, pw = (0, 0), (0, 0)
    else:
        raise ValueError(f"unknown padding '{padding}'")

    xp = x.data
    if any(ph) or any(pw):
        xp = np.pad(xp, ((0, 0), ph, pw, (0, 0)))
    hp, wp = xp.shape[1], xp.shape[2]
    if hp < kh or wp < kw:
        raise ShapeError(f"conv2d '{params.name}': input {x.shape} smaller than kernel {kh}x{kw}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * cin)
    wmat = weight.reshape(kh * kw * cin, cout)
    out = cols @ wmat
    if "bias" in params:
        out += _param(params, "bias", x.dtype)
    result = Tensor.wrap(out.reshape(n, ho, wo, cout))

    def backward(g: np.ndarray):
        g2 = g.reshape(n * ho * wo, cout)
        grads = {"weight": (cols.T @ g2).reshape(kh, kw, cin, cout)}
        if "bias" in params:
            grads["bias"] = g2.sum(axis=0)
        dcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, cin)
        dxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, ph[0]:ph[0] + h, pw[0]:pw[0] + w, :]
        return (dx,), grads

    return _record(tape, "conv2d", (x,), result, backward, params)


def conv1d(
    x: Tensor,
    params: LayerParams,
    tape: GradTape | None = None,
) -> Tensor:
    """Valid 1-D convolution of x[N,T,D] with a width x 1 kernel stored as [w,1,D,F]."""
    n, t, d = x.shape
    x4 = reshape(x, (n, t, 1, d), tape=tape)
    y = conv2d(x4, params, stride=1, padding="valid", tape=tape)
    return reshape(y, (n, y.shape[1], y.shape[3]), tape=tape)


def maxpool2d(
    x: Tensor | npt.ArrayLike,
    window: int = 2,
    stride: int = 2,
    tape: GradTape | None = None,
) -> Tensor:
    """Non-overlapping max pooling; odd trailing rows and columns are dropped."""
    x = as_tensor(x)
    if window != stride:
        raise ValueError("maxpool2d only supports non-overlapping windows (window == stride)")
    n, h, w, c = x.shape
    if h < window or w < window:
        raise ShapeError(f"maxpool2d needs spatial dims >= {window}, got {h}x{w}")
    ho, wo = h // window, w // window
    xc = x.data[:, :ho * window, :wo * window, :]
    blocks = (
        xc.reshape(n, ho, window, wo, window, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, ho, wo, c, window * window)
    )
    idx = blocks.argmax(axis=-1)[..., None]
    result = Tensor.wrap(np.take_along_axis(blocks, idx, axis=-1)[..., 0])

    def backward(g: np.ndarray):
        dblocks = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(dblocks, idx, g[..., None], axis=-1)
        dxc = (
            dblocks.reshape(n, ho, wo, c, window, window)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, ho * window, wo * window, c)
        )
        dx = np.zeros(x.shape, dtype=g.dtype)
        dx[:, :ho * window, :wo * window, :] = dxc
        return (dx,), {}

    return _record(tape, "maxpool2d", (x,), result, backward)


def global_avg_pool(x: Tensor | npt.ArrayLike, tape: GradTape | None = None) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects [N,H,W,C], got {x.shape}")
    n, h, w, c = x.shape
    if h < 1 or w < 1:
        raise ShapeError(f"global_avg_pool needs H,W >= 1, got {h}x{w}")
    result = Tensor.wrap(x.data.mean(axis=(1, 2)))

    def backward(g: np.ndarray):
        dx = np.broadcast_to(g[:, None, None, :] / (h * w), x.shape).copy()
        return (dx,), {}

    return _record(tape, "global_avg_pool", (x,), result, backward)


def max_over_time(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """Max over axis 1 of [N,T,C]."""
    if x.ndim != 3:
        raise ShapeError(f"max_over_time expects [N,T,C], got {x.shape}")
    idx = x.data.argmax(axis=1)[:, None, :]
    result = Tensor.wrap(np.take_along_axis(x.data, idx, axis=1)[:, 0, :])

    def backward(g: np.ndarray):
        dx = np.zeros(x.shape, dtype=g.dtype)
        np.put_along_axis(dx, idx, g[:, None, :], axis=1)
        return (dx,), {}

    return _record(tape, "max_over_time", (x,), result, backward)


# ── Normalization ─────────────────────────────────────────────

def batchnorm(
    x: Tensor | npt.ArrayLike,
    params: LayerParams,
    mode: Mode = "train",
    epsilon: float = 1e-3,
    momentum: float = 0.99,
    update_stats: bool = True,
    tape: GradTape | None = None,
) -> Tensor:
    """Batch normalization over every axis but the last (channel) one."""
    x = as_tensor(x)
    gamma = _param(params, "gamma", x.dtype)
    beta = _param(params, "beta", x.dtype)
    if x.shape[-1] != gamma.shape[0]:
        raise ShapeError(
            f"batchnorm '{params.name}': {x.shape[-1]} channels vs gamma of length {gamma.shape[0]}"
        )
    axes = tuple(range(x.ndim - 1))
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1

    if mode == "train":
        if count == 0:
            raise ShapeError(f"batchnorm '{params.name}': empty batch in train mode")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_stats:
            running_mean, running_var = params["running_mean"], params["running_var"]
            running_mean[...] = momentum * running_mean + (1.0 - momentum) * mean
            running_var[...] = momentum * running_var + (1.0 - momentum) * var
    elif mode == "infer":
        mean = _param(params, "running_mean", x.dtype)
        var = _param(params, "running_var", x.dtype)
    else:
        raise ValueError(f"unknown batchnorm mode '{mode}'")

    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mean) * inv_std
    result = Tensor.wrap(gamma * xhat + beta)

    def backward(g: np.ndarray):
        grads = {"gamma": (g * xhat).sum(axis=axes), "beta": g.sum(axis=axes)}
        dxhat = g * gamma
        if mode == "train":
            dx = (inv_std / count) * (
                count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
            )
        else:
            dx = dxhat * inv_std
        return (dx,), grads

    return _record(tape, "batchnorm", (x,), result, backward, params)


def layernorm(
    x: Tensor,
    params: LayerParams,
    epsilon: float = 1e-5,
    tape: GradTape | None = None,
) -> Tensor:
    gamma = _param(params, "gamma", x.dtype)
    beta = _param(params, "beta", x.dtype)
    if x.shape[-1] != gamma.shape[0]:
        raise ShapeError(f"layernorm '{params.name}': width {x.shape[-1]} vs gamma {gamma.shape}")
    d = x.shape[-1]
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mean) * inv_std
    result = Tensor.wrap(gamma * xhat + beta)
    lead = tuple(range(x.ndim - 1))

    def backward(g: np.ndarray):
        grads = {"gamma": (g * xhat).sum(axis=lead), "beta": g.sum(axis=lead)}
        dxhat = g * gamma
        dx = (inv_std / d) * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return (dx,), grads

    return _record(tape, "layernorm", (x,), result, backward, params)


# ── Dense / activations ───────────────────────────────────────

def dense(x: Tensor | npt.ArrayLike, params: LayerParams, tape: GradTape | None = None) -> Tensor:
    """Affine map over the last axis: x @ W + b."""
    x = as_tensor(x)
    weight = _param(params, "weight", x.dtype)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"dense '{params.name}': input width {x.shape[-1]} != weight rows {weight.shape[0]}"
        )
    out = x.data @ weight
    if "bias" in params:
        out = out + _param(params, "bias", x.dtype)
    result = Tensor.wrap(out)
    din, dout = weight.shape

    def backward(g: np.ndarray):
        x2 = x.data.reshape(-1, din)
        g2 = g.reshape(-1, dout)
        grads = {"weight": x2.T @ g2}
        if "bias" in params:
            grads["bias"] = g2.sum(axis=0)
        return (g @ weight.T,), grads

    return _record(tape, "dense", (x,), result, backward, params)


def activation(
    x: Tensor | npt.ArrayLike,
    kind: Literal["relu", "sigmoid"],
    tape: GradTape | None = None,
) -> Tensor:
    x = as_tensor(x)
    if kind == "relu":
        active = x.data > 0
        result = Tensor.wrap(np.where(active, x.data, x.dtype.type(0)))

        def backward(g: np.ndarray):
            return (g * active,), {}

    elif kind == "sigmoid":
        s = _open_unit_interval(expit(x.data).astype(x.dtype, copy=False))
        result = Tensor.wrap(s)

        def backward(g: np.ndarray):
            return (g * s * (1.0 - s),), {}

    else:
        raise ValueError(f"unknown activation '{kind}'")
    return _record(tape, kind, (x,), result, backward)


def softmax(x: Tensor, tape: GradTape | None = None) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    result = Tensor.wrap(s)

    def backward(g: np.ndarray):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),), {}

    return _record(tape, "softmax", (x,), result, backward)


def attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    key_mask: np.ndarray,
    heads: int,
    tape: GradTape | None = None,
) -> Tensor:
    """Multi-head scaled dot-product attention; masked keys get zero weight."""
    n, t, d = q.shape
    if d % heads:
        raise ShapeError(f"model width {d} is not divisible by {heads} heads")
    if key_mask.shape != (n, t):
        raise ShapeError(f"key mask {key_mask.shape} does not match sequence batch {(n, t)}")
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)

    def split(a: np.ndarray) -> np.ndarray:
        return a.reshape(n, t, heads, dh).transpose(0, 2, 1, 3)

    def merge(a: np.ndarray) -> np.ndarray:
        return a.transpose(0, 2, 1, 3).reshape(n, t, d)

    qh, kh, vh = split(q.data), split(k.data), split(v.data)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    scores = np.where(key_mask[:, None, None, :], scores, q.dtype.type(MASK_FILL))
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    result = Tensor.wrap(merge(weights @ vh))

    def backward(g: np.ndarray):
        dctx = split(g)
        dweights = dctx @ vh.transpose(0, 1, 3, 2)
        dv = weights.transpose(0, 1, 3, 2) @ dctx
        dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True)) * scale
        dq = dscores @ kh
        dk = dscores.transpose(0, 1, 3, 2) @ qh
        return (merge(dq), merge(dk), merge(dv)), {}

    return _record(tape, "attention", (q, k, v), result, backward)


# ── Structural ops ────────────────────────────────────────────

def reshape(x: Tensor, shape: Sequence[int], tape: GradTape | None = None) -> Tensor:
    result = Tensor.wrap(x.data.reshape(shape))

    def backward(g: np.ndarray):
        return (g.reshape(x.shape),), {}

    return _record(tape, "reshape", (x,), result, backward)


def add(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    result = Tensor.wrap(a.data + b.data)

    def backward(g: np.ndarray):
        return (g, g), {}

    return _record(tape, "add", (a, b), result, backward)


def concat(tensors: Sequence[Tensor], axis: int = -1, tape: GradTape | None = None) -> Tensor:
    result = Tensor.wrap(np.concatenate([t.data for t in tensors], axis=axis))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis)), {}

    return _record(tape, "concat", tuple(tensors), result, backward)


def stack(tensors: Sequence[Tensor], tape: GradTape | None = None) -> Tensor:
    result = Tensor.wrap(np.stack([t.data for t in tensors], axis=0))

    def backward(g: np.ndarray):
        return tuple(g[i] for i in range(len(tensors))), {}

    return _record(tape, "stack", tuple(tensors), result, backward)


def select_column(x: Tensor, column: int, tape: GradTape | None = None) -> Tensor:
    result = Tensor.wrap(x.data[:, column].copy())

    def backward(g: np.ndarray):
        dx = np.zeros(x.shape, dtype=g.dtype)
        dx[:, column] = g
        return (dx,), {}

    return _record(tape, "select_column", (x,), result, backward)


def take_rows(x: Tensor, rows: np.ndarray, tape: GradTape | None = None) -> Tensor:
    """x[rows] along axis 0; repeated rows accumulate gradient."""
    rows = np.asarray(rows, dtype=np.int64)
    result = Tensor.wrap(x.data[rows])

    def backward(g: np.ndarray):
        dx = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(dx, rows, g)
        return (dx,), {}

    return _record(tape, "take_rows", (x,), result, backward)


def masked_mean(x: Tensor, mask: np.ndarray, tape: GradTape | None = None) -> Tensor:
    """Mean of x[N,T,D] over the positions where mask[N,T] is true."""
    if mask.shape != x.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match {x.shape[:2]}")
    m = mask.astype(x.dtype)[..., None]
    counts = np.maximum(m.sum(axis=1), 1.0)
    result = Tensor.wrap((x.data * m).sum(axis=1) / counts)

    def backward(g: np.ndarray):
        return ((g[:, None, :] * m) / counts[:, None, :],), {}

    return _record(tape, "masked_mean", (x,), result, backward)


def embedding_lookup(
    ids: np.ndarray,
    params: LayerParams,
    fixed: np.ndarray | None = None,
    tape: GradTape | None = None,
) -> Tensor:
    """Rows of params.weight for ids >= 0, zero rows for negative ids, plus fixed rows."""
    weight = params["weight"]
    ids = np.asarray(ids)
    valid = ids >= 0
    out = np.zeros(ids.shape + (weight.shape[1],), dtype=weight.dtype)
    out[valid] = weight[ids[valid]]
    if fixed is not None:
        out += fixed.astype(weight.dtype, copy=False)
    result = Tensor.wrap(out)

    def backward(g: np.ndarray):
        dw = np.zeros_like(weight)
        np.add.at(dw, ids[valid], g[valid])
        return (), {"weight": dw}

    return _record(tape, "embedding_lookup", (), result, backward, params)


# ── Loss ──────────────────────────────────────────────────────

def _check_targets(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"bce: prediction shape {pred.shape} != target shape {target.shape}")
    if not np.all((target == 0.0) | (target == 1.0)):
        raise ValueError("bce targets must be 0 or 1")
    return target


def bce_loss(pred: Tensor | npt.ArrayLike, target: npt.ArrayLike, eps: float = 1e-7) -> float:
    """Mean binary cross-entropy with predictions clamped to [eps, 1 - eps]."""
    p = np.asarray(pred, dtype=np.float64)
    y = _check_targets(p, np.asarray(target))
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def bce_grad(pred: Tensor | npt.ArrayLike, target: npt.ArrayLike, eps: float = 1e-7) -> np.ndarray:
    """d bce_loss / d pred, zero where the clamp is active."""
    raw = np.asarray(pred)
    p = raw.astype(np.float64)
    y = _check_targets(p, np.asarray(target))
    inside = (p > eps) & (p < 1.0 - eps)
    pc = np.clip(p, eps, 1.0 - eps)
    g = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / p.size
    return (g * inside).astype(raw.dtype if raw.dtype.kind == "f" else np.float64)
