"""Windowed and full-sequence multi-head self-attention blocks.

Window attention operates on non-overlapping M-by-M token windows with a
learned relative-position bias; the shifted variant cyclically rolls the
map by half a window so consecutive blocks exchange information across
window borders, with an additive mask suppressing attention between tokens
that wrapped in from non-adjacent regions.  No implicit padding anywhere:
feature extents must divide the window size.
"""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .nn import LayerNorm, Linear, Mlp
from .tensor import Module, Parameter, ShapeMismatch, Tensor

MASK_NEG = -100.0  # finite so backward stays NaN-free


def window_partition(x: Tensor, window: int) -> Tensor:
    """(B, H, W, C) -> (B, nW, M*M, C); windows row-major over the window
    grid, tokens row-major within each window."""
    if x.ndim != 4:
        raise ShapeMismatch(f"window_partition: expected (B, H, W, C), got {x.shape}")
    B, H, W, C = x.shape
    if H % window != 0:
        raise ShapeMismatch(f"window_partition: height {H} not divisible by window {window}")
    if W % window != 0:
        raise ShapeMismatch(f"window_partition: width {W} not divisible by window {window}")
    gh, gw = H // window, W // window
    x = ops.reshape(x, (B, gh, window, gw, window, C))
    x = ops.permute(x, (0, 1, 3, 2, 4, 5))
    return ops.reshape(x, (B, gh * gw, window * window, C))


def window_reverse(windows: Tensor, window: int, H: int, W: int) -> Tensor:
    """Exact inverse of window_partition."""
    B, nw, n, C = windows.shape
    gh, gw = H // window, W // window
    if nw != gh * gw or n != window * window:
        raise ShapeMismatch(
            f"window_reverse: got {nw} windows of {n} tokens, expected {gh * gw} of {window * window}"
        )
    x = ops.reshape(windows, (B, gh, gw, window, window, C))
    x = ops.permute(x, (0, 1, 3, 2, 4, 5))
    return ops.reshape(x, (B, H, W, C))


def shift_region_ids(H: int, W: int, window: int, shift: int) -> np.ndarray:
    """Label each position of the rolled map with the id of the contiguous
    pre-shift region it came from (3x3 band pattern)."""
    ids = np.zeros((H, W), dtype=np.int64)
    spans = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    tag = 0
    for hs in spans:
        for ws in spans:
            ids[hs, ws] = tag
            tag += 1
    return ids


def build_shift_mask(H: int, W: int, window: int, shift: int) -> np.ndarray:
    """Additive mask (nW, M*M, M*M): 0 within a pre-shift region, MASK_NEG
    between tokens of different regions sharing a rolled window."""
    if shift <= 0:
        raise ValueError(f"build_shift_mask: shift must be positive, got {shift}")
    if shift >= window:
        raise ValueError(f"build_shift_mask: shift {shift} must be smaller than window {window}")
    if H % window != 0 or W % window != 0:
        raise ShapeMismatch(f"build_shift_mask: ({H},{W}) not divisible by window {window}")
    ids = shift_region_ids(H, W, window, shift)
    gh, gw = H // window, W // window
    grouped = (
        ids.reshape(gh, window, gw, window).transpose(0, 2, 1, 3).reshape(gh * gw, window * window)
    )
    diff = grouped[:, :, None] != grouped[:, None, :]
    return np.where(diff, MASK_NEG, 0.0)


def relative_position_index(window: int) -> np.ndarray:
    """(M*M, M*M) lookup into a (2M-1)^2 bias table; equal relative
    displacement maps to the same table row."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :]
    rel = rel.transpose(1, 2, 0) + (window - 1)
    return rel[..., 0] * (2 * window - 1) + rel[..., 1]


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., N, C) -> (..., heads, N, C // heads)."""
    *lead, N, C = x.shape
    x = ops.reshape(x, (*lead, N, heads, C // heads))
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return ops.permute(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, heads, N, d = x.shape
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = ops.permute(x, axes)
    return ops.reshape(x, (*lead, N, heads * d))


def _attend(qkv: Tensor, dim: int, heads: int, extra_scores=None) -> Tensor:
    """Multi-head scaled dot-product attention over the last two axes.

    qkv: (..., N, 3*dim).  extra_scores, when given, is a list of constant
    or differentiable additive terms broadcastable to the score tensor.
    """
    q = _split_heads(ops.narrow(qkv, -1, 0, dim), heads)
    k = _split_heads(ops.narrow(qkv, -1, dim, dim), heads)
    v = _split_heads(ops.narrow(qkv, -1, 2 * dim, dim), heads)
    scale = 1.0 / math.sqrt(dim // heads)
    axes = list(range(k.ndim))
    axes[-2], axes[-1] = axes[-1], axes[-2]
    scores = ops.mul(ops.matmul(q, ops.permute(k, axes)), scale)
    for term in extra_scores or ():
        if isinstance(term, Tensor):
            scores = ops.add(scores, term)
        else:
            scores = ops.masked_add(scores, term)
    attn = ops.softmax(scores, axis=-1)
    return _merge_heads(ops.matmul(attn, v))


class WindowAttention(Module):
    """Per-window multi-head attention with relative-position bias."""

    def __init__(self, dim: int, num_heads: int, window: int, rng: np.random.Generator):
        if dim % num_heads != 0:
            raise ShapeMismatch(f"window attention: dim {dim} not divisible by heads {num_heads}")
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.bias_table = Parameter(np.zeros(((2 * window - 1) ** 2, num_heads)))
        self.dim = dim
        self.num_heads = num_heads
        self.window = window
        self.rel_index = relative_position_index(window)  # constant

    def _bias(self) -> Tensor:
        n = self.window * self.window
        bias = ops.gather_rows(self.bias_table, self.rel_index.reshape(-1))
        bias = ops.reshape(bias, (n, n, self.num_heads))
        return ops.permute(bias, (2, 0, 1))  # (heads, N, N)

    def __call__(self, windows: Tensor, mask: np.ndarray | None = None) -> Tensor:
        B, nw, n, C = windows.shape
        extra: list = [self._bias()]
        if mask is not None:
            if mask.shape != (nw, n, n):
                raise ShapeMismatch(
                    f"window attention: mask shape {mask.shape} != ({nw}, {n}, {n}) for {nw} windows"
                )
            extra.append(mask.reshape(nw, 1, n, n))
        out = _attend(self.qkv(windows), self.dim, self.num_heads, extra)
        return self.proj(out)


class SwinBlock(Module):
    """Pre-norm window attention + pre-norm MLP, both residual.

    A block constructed with shifted=True rolls the map by -M//2 before
    partitioning and back afterwards, masking wrapped windows.  When the
    map is a single window (extent == window size) the shift degenerates
    and the block computes plain window attention.
    """

    def __init__(self, dim: int, num_heads: int, window: int, shifted: bool, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, rng)
        self.shifted = shifted
        self._mask_cache: dict = {}

    def _mask_for(self, H: int, W: int, shift: int) -> np.ndarray:
        key = (H, W, shift)
        if key not in self._mask_cache:
            self._mask_cache[key] = build_shift_mask(H, W, self.attn.window, shift)
        return self._mask_cache[key]

    def __call__(self, x: Tensor) -> Tensor:
        B, H, W, C = x.shape
        M = self.attn.window
        shift = M // 2 if (self.shifted and M > 1 and max(H, W) > M) else 0

        y = self.norm1(x)
        if shift:
            y = ops.roll2d(y, -shift, -shift)
        wins = window_partition(y, M)
        wins = self.attn(wins, self._mask_for(H, W, shift) if shift else None)
        y = window_reverse(wins, M, H, W)
        if shift:
            y = ops.roll2d(y, shift, shift)
        x = ops.add(x, y)
        return ops.add(x, self.mlp(self.norm2(x)))


class TransformerBlock(Module):
    """Standard pre-norm MSA + MLP block over a full token sequence.

    No positional information of any kind: the block is equivariant under
    token permutation.  A class-level invocation counter supports tests
    that audit how often fusion runs attention.
    """

    invocations = 0

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        if dim % num_heads != 0:
            raise ShapeMismatch(f"transformer block: dim {dim} not divisible by heads {num_heads}")
        self.norm1 = LayerNorm(dim)
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, rng)
        self.dim = dim
        self.num_heads = num_heads

    def __call__(self, tokens: Tensor) -> Tensor:
        TransformerBlock.invocations += 1
        y = self.norm1(tokens)
        y = self.proj(_attend(self.qkv(y), self.dim, self.num_heads))
        tokens = ops.add(tokens, y)
        return ops.add(tokens, self.mlp(self.norm2(tokens)))
