"""Cross-branch fusion of same-stage features.

The attention-based fuse (used by ds_transunet mode) pools one branch's
stage feature into a single summary token, prepends it to the other
branch's token sequence, and runs one full self-attention block so every
token attends to the cross-scale summary; this happens once in each
direction per stage.  The two refined maps are then merged back to the
fine branch's resolution and projected to the decoder width.  The
convolutional fuse (multiscale_sd mode) replaces both interactions with a
plain upsample + concat + conv block.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .attention import TransformerBlock
from .nn import ConvBlock, Linear
from .tensor import Module, ShapeMismatch, Tensor


def summarize(tokens: Tensor, projection: Linear | None = None) -> Tensor:
    """Mean over all tokens of (B, ..., c), optionally projected to a target
    channel width; identity when widths already match."""
    pooled = ops.avgpool_spatial(tokens)
    if projection is not None:
        pooled = projection(pooled)
    return pooled


def tif_interact(tokens: Tensor, summary: Tensor, block: TransformerBlock) -> Tensor:
    """Prepend the summary as token 0, attend over 1+N tokens, drop token 0."""
    B, N, C = tokens.shape
    if summary.shape != (B, C):
        raise ShapeMismatch(f"tif_interact: summary shape {summary.shape} != ({B}, {C})")
    seq = ops.concat([ops.reshape(summary, (B, 1, C)), tokens], axis=1)
    out = block(seq)
    return ops.narrow(out, 1, 1, N)


class TifStage(Module):
    """Bidirectional summary-token attention for one stage pair."""

    def __init__(self, fine_dim: int, coarse_dim: int, fine_heads: int, coarse_heads: int,
                 out_dim: int, merge: bool, rng: np.random.Generator):
        self.coarse_to_fine = Linear(coarse_dim, fine_dim, rng) if coarse_dim != fine_dim else None
        self.fine_to_coarse = Linear(fine_dim, coarse_dim, rng) if coarse_dim != fine_dim else None
        self.fine_block = TransformerBlock(fine_dim, fine_heads, rng)
        self.coarse_block = TransformerBlock(coarse_dim, coarse_heads, rng)
        merged_dim = fine_dim + coarse_dim if merge else fine_dim
        self.proj = Linear(merged_dim, out_dim, rng)
        self.merge = merge

    def __call__(self, fine: Tensor, coarse: Tensor) -> Tensor:
        B, h, w, C = fine.shape
        _, hc, wc, c = coarse.shape
        if h != 2 * hc or w != 2 * wc:
            raise ShapeMismatch(
                f"fuse_stage: fine resolution ({h},{w}) must be twice coarse ({hc},{wc})"
            )
        fine_tokens = ops.reshape(fine, (B, h * w, C))
        coarse_tokens = ops.reshape(coarse, (B, hc * wc, c))

        fine_out = tif_interact(
            fine_tokens, summarize(coarse_tokens, self.coarse_to_fine), self.fine_block
        )
        fine_out = ops.reshape(fine_out, (B, h, w, C))
        if not self.merge:
            return self.proj(fine_out)

        coarse_out = tif_interact(
            coarse_tokens, summarize(fine_tokens, self.fine_to_coarse), self.coarse_block
        )
        coarse_out = ops.upsample_nearest(ops.reshape(coarse_out, (B, hc, wc, c)), 2)
        return self.proj(ops.concat([fine_out, coarse_out], axis=-1))


class ConvFuse(Module):
    """Upsample the coarse map, concatenate, and fuse with a conv block."""

    def __init__(self, fine_dim: int, coarse_dim: int, out_dim: int, rng: np.random.Generator):
        self.block = ConvBlock(fine_dim + coarse_dim, out_dim, rng)

    def __call__(self, fine: Tensor, coarse: Tensor) -> Tensor:
        B, h, w, C = fine.shape
        _, hc, wc, c = coarse.shape
        if h != 2 * hc or w != 2 * wc:
            raise ShapeMismatch(
                f"fuse_stage: fine resolution ({h},{w}) must be twice coarse ({hc},{wc})"
            )
        up = ops.upsample_nearest(coarse, 2)
        return self.block(ops.concat([fine, up], axis=-1))
