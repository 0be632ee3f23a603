"""Parameterized layers shared across the network.

Initialization is deterministic: every constructor consumes draws from the
numpy Generator it is handed, so a fixed seed and fixed construction order
reproduce the model bit-for-bit.  Linear/attention weights are truncated
normal (std 0.02), biases and bias tables start at zero, norm gains at one.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Module, Parameter, Tensor, trunc_normal


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.w = Parameter(trunc_normal(rng, (in_dim, out_dim)))
        self.b = Parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.w)
        if self.b is not None:
            y = ops.add(y, self.b)
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.mul(ops.layernorm(x, self.eps), self.gain), self.bias)


class GroupNorm(Module):
    """Group normalization over (B,H,W,C); groups = min(8, channels)."""

    def __init__(self, channels: int, groups: int | None = None, eps: float = 1e-5):
        if groups is None:
            groups = min(8, channels)
        while channels % groups != 0:
            groups -= 1
        self.groups = groups
        self.eps = eps
        self.gain = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.mul(ops.groupnorm(x, self.groups, self.eps), self.gain), self.bias)


class Mlp(Module):
    """Two-layer feed-forward with exact-erf GELU; hidden width = 4x dim."""

    def __init__(self, dim: int, rng: np.random.Generator, hidden_ratio: int = 4):
        self.fc1 = Linear(dim, hidden_ratio * dim, rng)
        self.fc2 = Linear(hidden_ratio * dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class Conv2d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
        bias: bool = True,
    ):
        self.w = Parameter(trunc_normal(rng, (kernel, kernel, in_ch, out_ch)))
        self.b = Parameter(np.zeros(out_ch)) if bias else None
        self.stride = stride
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class ConvBlock(Module):
    """3x3 convolution, group normalization, ReLU."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, stride: int = 1):
        self.conv = Conv2d(in_ch, out_ch, 3, rng, stride=stride, pad=1)
        self.norm = GroupNorm(out_ch)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))
