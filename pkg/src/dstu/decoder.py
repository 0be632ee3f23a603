"""Decoder stages, low-level convolutional features, and prediction heads.

The decoder climbs H/32 -> H/16 -> H/8 -> H/4 in three stages, each
upsampling by 2, concatenating the matching skip feature, projecting to the
stage width and (in the attention decoder) running a window/shifted-window
block pair.  The final full-resolution head recovers detail by
concatenating convolutional features of the raw image at H/2 and H.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .attention import SwinBlock
from .config import StagePlan
from .nn import Conv2d, ConvBlock, Linear
from .tensor import Module, ShapeMismatch, Tensor


class DecoderStage(Module):
    """Upsample x2, concat skip, project, then a window-attention block pair."""

    def __init__(self, in_dim: int, skip_dim: int, plan: StagePlan, rng: np.random.Generator):
        self.proj = Linear(in_dim + skip_dim, plan.dim, rng)
        self.blocks = [
            SwinBlock(plan.dim, plan.heads, plan.window, shifted=(i % 2 == 1), rng=rng)
            for i in range(plan.depth)
        ]

    def __call__(self, x: Tensor, skip: Tensor) -> Tensor:
        x = ops.upsample_nearest(x, 2)
        _check_skip(x, skip)
        x = self.proj(ops.concat([x, skip], axis=-1))
        for block in self.blocks:
            x = block(x)
        return x


class ConvDecoderStage(Module):
    """Plain U-Net style stage: upsample x2, concat skip, conv block."""

    def __init__(self, in_dim: int, skip_dim: int, out_dim: int, rng: np.random.Generator):
        self.block = ConvBlock(in_dim + skip_dim, out_dim, rng)

    def __call__(self, x: Tensor, skip: Tensor) -> Tensor:
        x = ops.upsample_nearest(x, 2)
        _check_skip(x, skip)
        return self.block(ops.concat([x, skip], axis=-1))


def _check_skip(x: Tensor, skip: Tensor) -> None:
    if x.shape[1] != skip.shape[1] or x.shape[2] != skip.shape[2]:
        raise ShapeMismatch(
            f"decoder_stage: skip resolution ({skip.shape[1]},{skip.shape[2]}) "
            f"!= upsampled input ({x.shape[1]},{x.shape[2]})"
        )


class CascadeUpBlock(Module):
    """Skip-free progressive upsampling: conv block then upsample x2."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.block = ConvBlock(in_dim, out_dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.upsample_nearest(self.block(x), 2)


class LowLevelFeatures(Module):
    """Two cascaded conv-groupnorm-ReLU blocks on the raw image: the first
    keeps full resolution, the second halves it."""

    def __init__(self, in_ch: int, dim: int, rng: np.random.Generator):
        self.block1 = ConvBlock(in_ch, dim, rng, stride=1)
        self.block2 = ConvBlock(dim, dim, rng, stride=2)

    def __call__(self, image: Tensor) -> tuple[Tensor, Tensor]:
        full = self.block1(image)
        half = self.block2(full)
        return full, half


class FinalHead(Module):
    """H/4 decoder output -> H/2 (concat low-level) -> H (concat low-level)
    -> single-channel logits."""

    def __init__(self, in_dim: int, low_dim: int, rng: np.random.Generator):
        self.block_half = ConvBlock(in_dim + low_dim, low_dim, rng)
        self.block_full = ConvBlock(low_dim + low_dim, low_dim, rng)
        self.out = Conv2d(low_dim, 1, 1, rng)

    def __call__(self, x: Tensor, low_full: Tensor, low_half: Tensor) -> Tensor:
        x = ops.upsample_nearest(x, 2)
        x = self.block_half(ops.concat([x, low_half], axis=-1))
        x = ops.upsample_nearest(x, 2)
        x = self.block_full(ops.concat([x, low_full], axis=-1))
        return self.out(x)


class AuxHead(Module):
    """1x1 conv to one channel, then nearest upsample to full resolution."""

    def __init__(self, in_dim: int, factor: int, rng: np.random.Generator):
        self.out = Conv2d(in_dim, 1, 1, rng)
        self.factor = factor

    def __call__(self, x: Tensor) -> Tensor:
        return ops.upsample_nearest(self.out(x), self.factor)
