"""Hierarchical dual-scale encoder.

Each branch slices the image into patches, embeds them linearly (no
positional encoding; patch extraction is translation-equivariant), and runs
four stages of paired window / shifted-window attention blocks.  Patch
merging after stages 1-3 halves each spatial side and doubles channels, so
stage i of a patch-size-s branch sits at (H/s)/2^(i-1) with dim C*2^(i-1).
The dual encoder runs a fine (primary) and a coarse (complementary) branch
whose stages align at a 2:1 resolution ratio.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import ops
from .attention import SwinBlock
from .config import ModelConfig, StagePlan
from .nn import LayerNorm, Linear
from .tensor import Module, ShapeMismatch, Tensor


@dataclasses.dataclass
class FeaturePyramid:
    """Per-stage token maps of one branch, stage i at (B, r_i, r_i, d_i)."""

    stages: list  # list[Tensor]

    def __iter__(self):
        return iter(self.stages)

    def __getitem__(self, i):
        return self.stages[i]


class PatchEmbed(Module):
    """Per-patch flatten + linear projection (equivalent to an s-by-s
    convolution at stride s); adds no positional information."""

    def __init__(self, patch: int, in_ch: int, dim: int, rng: np.random.Generator):
        self.proj = Linear(patch * patch * in_ch, dim, rng)
        self.patch = patch
        self.in_ch = in_ch

    def __call__(self, image: Tensor) -> Tensor:
        B, H, W, C = image.shape
        s = self.patch
        if C != self.in_ch:
            raise ShapeMismatch(f"patch_embed: image channels {C} != configured {self.in_ch}")
        if H % s != 0 or W % s != 0:
            raise ShapeMismatch(f"patch_embed: resolution ({H},{W}) not divisible by patch size {s}")
        x = ops.reshape(image, (B, H // s, s, W // s, s, C))
        x = ops.permute(x, (0, 1, 3, 2, 4, 5))
        x = ops.reshape(x, (B, H // s, W // s, s * s * C))
        return self.proj(x)


class PatchMerge(Module):
    """Concatenate each 2x2 token neighborhood (4c), normalize, project to
    2c: quarters token count, halves each side, doubles channels."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.norm = LayerNorm(4 * dim)
        self.proj = Linear(4 * dim, 2 * dim, rng, bias=False)

    def __call__(self, x: Tensor) -> Tensor:
        B, h, w, c = x.shape
        if h % 2 != 0 or w % 2 != 0:
            raise ShapeMismatch(f"patch_merge: odd spatial extent ({h},{w})")
        x = ops.reshape(x, (B, h // 2, 2, w // 2, 2, c))
        x = ops.permute(x, (0, 1, 3, 2, 4, 5))
        x = ops.reshape(x, (B, h // 2, w // 2, 4 * c))
        return self.proj(self.norm(x))


class SwinStage(Module):
    """depth blocks alternating plain / shifted window attention, plus a
    norm applied to the copy exposed as a skip feature."""

    def __init__(self, plan: StagePlan, rng: np.random.Generator):
        self.blocks = [
            SwinBlock(plan.dim, plan.heads, plan.window, shifted=(i % 2 == 1), rng=rng)
            for i in range(plan.depth)
        ]
        self.norm_out = LayerNorm(plan.dim)
        self.plan = plan

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        for block in self.blocks:
            x = block(x)
        return x, self.norm_out(x)


class Branch(Module):
    """One four-stage hierarchical encoder branch."""

    def __init__(self, cfg: ModelConfig, patch: int, base_dim: int, rng: np.random.Generator):
        self.plans = cfg.branch_plan(patch, base_dim)
        self.embed = PatchEmbed(patch, cfg.in_channels, base_dim, rng)
        self.stages = [SwinStage(plan, rng) for plan in self.plans]
        self.merges = [PatchMerge(self.plans[i].dim, rng) for i in range(3)]
        self.patch = patch

    def __call__(self, image: Tensor) -> FeaturePyramid:
        x = self.embed(image)
        skips = []
        for i, stage in enumerate(self.stages):
            x, skip = stage(x)
            skips.append(skip)
            if i < 3:
                x = self.merges[i](x)
        return FeaturePyramid(skips)


class DualEncoder(Module):
    """Primary (fine) branch, plus a complementary (coarse) branch at twice
    the patch size in dual-branch modes."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.primary = Branch(cfg, cfg.patch_primary, cfg.dim_primary, rng)
        self.complementary = (
            Branch(cfg, cfg.patch_complementary, cfg.dim_complementary, rng)
            if cfg.dual_branch
            else None
        )

    def __call__(self, image: Tensor):
        fine = self.primary(image)
        coarse = self.complementary(image) if self.complementary is not None else None
        return fine, coarse
