"""Differentiable primitives.

Every function validates operand shapes against its shape law (naming the
offending dimension on mismatch), rejects non-finite tensor inputs, and
records the inputs needed for backward.  All tensors are channels-last;
spatial primitives expect a leading batch axis, i.e. (B, H, W, C) for maps
and (B, N, C) for token sequences.
"""

from __future__ import annotations

import math

import numpy as np

from . import backend
from .tensor import NonFiniteValues, ShapeMismatch, Tensor

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _require_finite(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if not np.isfinite(t.data).all():
            raise NonFiniteValues(f"{op}: non-finite values in input of shape {t.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _coerce_const(value) -> float | np.ndarray:
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise NonFiniteValues("non-finite scalar operand")
        return float(value)
    arr = np.asarray(value, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NonFiniteValues("non-finite array operand")
    return arr


# -- elementwise arithmetic ---------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _coerce_const(b)
        _require_finite("add", a)
        out = a.data + c

        def bwd(g):
            return (_unbroadcast(g, a.shape),)

        return Tensor._from_op(out, "add", (a,), bwd)

    _require_finite("add", a, b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out, "add", (a, b), bwd)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _coerce_const(b)
        _require_finite("mul", a)
        out = a.data * c

        def bwd(g):
            return (_unbroadcast(g * c, a.shape),)

        return Tensor._from_op(out, "mul", (a,), bwd)

    _require_finite("mul", a, b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return Tensor._from_op(out, "mul", (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_finite("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(
            f"matmul: inner dimensions differ (a.shape[-1]={a.shape[-1]}, b.shape[-2]={b.shape[-2]})"
        )
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bwd(g):
        ga = _unbroadcast(g @ bd.swapaxes(-1, -2), a.shape)
        gb = _unbroadcast(ad.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return Tensor._from_op(out, "matmul", (a, b), bwd)


# -- structural ops -----------------------------------------------------------


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    _require_finite("concat", *tensors)
    base = tensors[0].shape
    ax = axis % len(base)
    for t in tensors[1:]:
        if len(t.shape) != len(base):
            raise ShapeMismatch(f"concat: rank mismatch {base} vs {t.shape}")
        for d, (s0, s1) in enumerate(zip(base, t.shape)):
            if d != ax and s0 != s1:
                raise ShapeMismatch(f"concat: dimension {d} differs ({s0} vs {s1})")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=ax))

    return Tensor._from_op(out, "concat", tuple(tensors), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    _require_finite("reshape", x)
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: cannot view {x.shape} as {shape}")
    in_shape = x.shape

    def bwd(g):
        return (g.reshape(in_shape),)

    return Tensor._from_op(out, "reshape", (x,), bwd)


def permute(x: Tensor, axes) -> Tensor:
    _require_finite("permute", x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatch(f"permute: axes {axes} are not a permutation of rank {x.ndim}")
    out = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        return (np.transpose(g, inverse),)

    return Tensor._from_op(out, "permute", (x,), bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis (the `slice` primitive)."""
    _require_finite("slice", x)
    ax = axis % x.ndim
    if start < 0 or start + length > x.shape[ax]:
        raise ShapeMismatch(
            f"slice: [{start}:{start + length}] out of range for dimension {ax} of extent {x.shape[ax]}"
        )
    index = tuple(slice(None) if d != ax else slice(start, start + length) for d in range(x.ndim))
    out = x.data[index]
    in_shape = x.shape

    def bwd(g):
        gx = np.zeros(in_shape, dtype=g.dtype)
        gx[index] = g
        return (gx,)

    return Tensor._from_op(out, "slice", (x,), bwd)


def roll2d(x: Tensor, shift_h: int, shift_w: int) -> Tensor:
    """Cyclic shift of the two spatial axes of a (B, H, W, C) map."""
    _require_finite("roll2d", x)
    if x.ndim != 4:
        raise ShapeMismatch(f"roll2d: expected (B, H, W, C), got {x.shape}")
    out = np.roll(x.data, (shift_h, shift_w), axis=(1, 2))

    def bwd(g):
        return (np.roll(g, (-shift_h, -shift_w), axis=(1, 2)),)

    return Tensor._from_op(out, "roll2d", (x,), bwd)


def masked_add(x: Tensor, mask) -> Tensor:
    """Add a constant (non-differentiated) additive mask, broadcasting."""
    _require_finite("masked_add", x)
    mask = np.asarray(mask, dtype=np.float64)
    if not np.isfinite(mask).all():
        raise NonFiniteValues("masked_add: non-finite mask")
    try:
        out = x.data + mask
    except ValueError:
        raise ShapeMismatch(f"masked_add: mask {mask.shape} does not broadcast to {x.shape}")
    if out.shape != x.shape:
        raise ShapeMismatch(f"masked_add: mask {mask.shape} broadens {x.shape} to {out.shape}")

    def bwd(g):
        return (g,)

    return Tensor._from_op(out, "masked_add", (x,), bwd)


def gather_rows(table: Tensor, index) -> Tensor:
    """out[n] = table[index[n]]; backward scatter-adds into the table."""
    _require_finite("gather_rows", table)
    idx = np.asarray(index)
    if idx.ndim != 1:
        raise ShapeMismatch(f"gather_rows: index must be 1-D, got {idx.shape}")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= table.shape[0]:
        raise ShapeMismatch(f"gather_rows: index out of range for {table.shape[0]} rows")
    out = table.data[idx]
    rows, cols = table.shape

    def bwd(g):
        acc = np.zeros((rows, cols), dtype=g.dtype)
        backend.kernels().scatter_add_rows(acc, idx, np.ascontiguousarray(g))
        return (acc,)

    return Tensor._from_op(out, "gather_rows", (table,), bwd)


# -- nonlinearities and normalization ----------------------------------------


def relu(x: Tensor) -> Tensor:
    _require_finite("relu", x)
    out = np.maximum(x.data, 0.0)
    pos = x.data > 0.0

    def bwd(g):
        return (g * pos,)

    return Tensor._from_op(out, "relu", (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    _require_finite("sigmoid", x)
    out = _sigmoid_np(x.data)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return Tensor._from_op(out, "sigmoid", (x,), bwd)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    _require_finite("gelu", x)
    cdf = 0.5 * (1.0 + backend.kernels().erf(x.data * _INV_SQRT2))
    out = x.data * cdf
    xd = x.data

    def bwd(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return Tensor._from_op(out, "gelu", (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _require_finite("softmax", x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._from_op(out, "softmax", (x,), bwd)


def _normalize(x: np.ndarray, axes: tuple, eps: float):
    mean = x.mean(axis=axes, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return centered * inv_std, inv_std


def _normalize_backward(g: np.ndarray, z: np.ndarray, inv_std: np.ndarray, axes: tuple):
    gm = g.mean(axis=axes, keepdims=True)
    zm = (g * z).mean(axis=axes, keepdims=True)
    return inv_std * (g - gm - z * zm)


def layernorm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    if eps <= 0:
        raise ValueError("layernorm: eps must be positive")
    _require_finite("layernorm", x)
    z, inv_std = _normalize(x.data, (-1,), eps)

    def bwd(g):
        return (_normalize_backward(g, z, inv_std, (-1,)),)

    return Tensor._from_op(z, "layernorm", (x,), bwd)


def groupnorm(x: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize (B,H,W,C) per sample over spatial extent and channel group."""
    if eps <= 0:
        raise ValueError("groupnorm: eps must be positive")
    _require_finite("groupnorm", x)
    if x.ndim != 4:
        raise ShapeMismatch(f"groupnorm: expected (B, H, W, C), got {x.shape}")
    B, H, W, C = x.shape
    if C % groups != 0:
        raise ShapeMismatch(f"groupnorm: channels {C} not divisible by groups {groups}")
    grouped = x.data.reshape(B, H, W, groups, C // groups)
    z, inv_std = _normalize(grouped, (1, 2, 4), eps)

    def bwd(g):
        gg = _normalize_backward(g.reshape(grouped.shape), z, inv_std, (1, 2, 4))
        return (gg.reshape(B, H, W, C),)

    return Tensor._from_op(z.reshape(B, H, W, C), "groupnorm", (x,), bwd)


# -- spatial ops --------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution: x (B,H,W,Ci), w (kh,kw,Ci,Co), zero padding."""
    _require_finite("conv2d", x, w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d: expected 4-D operands, got {x.shape} and {w.shape}")
    B, H, W, Ci = x.shape
    kh, kw, wci, Co = w.shape
    if wci != Ci:
        raise ShapeMismatch(f"conv2d: input channels {Ci} != weight channels {wci}")
    if H + 2 * pad < kh or W + 2 * pad < kw:
        raise ShapeMismatch(f"conv2d: kernel ({kh},{kw}) exceeds padded input ({H + 2 * pad},{W + 2 * pad})")
    K = backend.kernels()
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    out = K.conv2d_forward(xd, wd, stride, pad)

    parents: tuple = (x, w)

    def bwd(g):
        g = np.ascontiguousarray(g)
        gx = K.conv2d_grad_input(g, wd, stride, pad, H, W)
        gw = K.conv2d_grad_weight(xd, g, stride, pad, kh, kw)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1, 2))

    if bias is not None:
        _require_finite("conv2d", bias)
        if bias.shape != (Co,):
            raise ShapeMismatch(f"conv2d: bias shape {bias.shape} != ({Co},)")
        out = out + bias.data
        parents = (x, w, bias)
    return Tensor._from_op(out, "conv2d", parents, bwd)


def avgpool_spatial(x: Tensor) -> Tensor:
    """Global mean over all non-batch, non-channel axes: (B,...,C) -> (B,C)."""
    _require_finite("avgpool_spatial", x)
    if x.ndim < 3:
        raise ShapeMismatch(f"avgpool_spatial: expected at least (B, N, C), got {x.shape}")
    axes = tuple(range(1, x.ndim - 1))
    n = int(np.prod([x.shape[a] for a in axes]))
    if n == 0:
        raise ShapeMismatch("avgpool_spatial: empty token set")
    out = x.data.mean(axis=axes)
    in_shape = x.shape
    expand = (in_shape[0],) + (1,) * len(axes) + (in_shape[-1],)

    def bwd(g):
        return (np.broadcast_to(g.reshape(expand) / n, in_shape).copy(),)

    return Tensor._from_op(out, "avgpool_spatial", (x,), bwd)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each spatial cell of (B,H,W,C) into a factor-by-factor block."""
    _require_finite("upsample_nearest", x)
    if x.ndim != 4:
        raise ShapeMismatch(f"upsample_nearest: expected (B, H, W, C), got {x.shape}")
    if factor < 1:
        raise ValueError("upsample_nearest: factor must be >= 1")
    B, H, W, C = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def bwd(g):
        return (g.reshape(B, H, factor, W, factor, C).sum(axis=(2, 4)),)

    return Tensor._from_op(out, "upsample_nearest", (x,), bwd)


# -- reductions ---------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    _require_finite("sum_all", x)
    out = np.array([x.data.sum()])
    in_shape = x.shape

    def bwd(g):
        return (np.full(in_shape, g[0]),)

    return Tensor._from_op(out, "sum_all", (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    _require_finite("mean_all", x)
    n = x.size
    out = np.array([x.data.mean()])
    in_shape = x.shape

    def bwd(g):
        return (np.full(in_shape, g[0] / n),)

    return Tensor._from_op(out, "mean_all", (x,), bwd)
