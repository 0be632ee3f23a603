"""Full segmentation network: dual-scale encoder, cross-branch fusion,
attention decoder, and the three supervised prediction heads.

Five selectable variants share this assembly:

  base          single branch; skip-free conv cascade from stage 4
  swin_unet     single branch; conv decoder with skips
  swin_decoder  single branch; attention decoder with skips
  multiscale_sd dual branch; conv fusion; attention decoder
  ds_transunet  dual branch; attention fusion; attention decoder

forward() returns full-resolution logits (s1, s2, s3): the main head plus
auxiliary heads on the encoder stage-4 feature and the first decoder stage.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .config import ModelConfig
from .decoder import (
    AuxHead,
    CascadeUpBlock,
    ConvDecoderStage,
    DecoderStage,
    FinalHead,
    LowLevelFeatures,
)
from .encoder import DualEncoder
from .fusion import ConvFuse, TifStage
from .tensor import Module, ShapeMismatch, Tensor


@dataclasses.dataclass
class Prediction:
    """Mask logits at image resolution, each (B, H, W, 1)."""

    s1: Tensor
    s2: Tensor
    s3: Tensor

    def __iter__(self):
        return iter((self.s1, self.s2, self.s3))


class SegModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        d = cfg.decoder_dim

        self.low_level = LowLevelFeatures(cfg.in_channels, cfg.low_level_dim, rng)
        self.encoder = DualEncoder(cfg, rng)

        fine_plans = cfg.branch_plan(cfg.patch_primary, cfg.dim_primary)
        if cfg.dual_branch:
            coarse_plans = cfg.branch_plan(cfg.patch_complementary, cfg.dim_complementary)
            if cfg.mode == "ds_transunet":
                self.fuse = [
                    TifStage(
                        fine_plans[i].dim,
                        coarse_plans[i].dim,
                        fine_plans[i].heads,
                        coarse_plans[i].heads,
                        d,
                        merge=(cfg.fuse_mode == "merge"),
                        rng=rng,
                    )
                    for i in range(4)
                ]
            else:
                self.fuse = [
                    ConvFuse(fine_plans[i].dim, coarse_plans[i].dim, d, rng) for i in range(4)
                ]
            skip_dims = [d, d, d, d]
        else:
            self.fuse = None
            skip_dims = [p.dim for p in fine_plans]

        dec_plans = cfg.decoder_plan()
        if cfg.mode == "base":
            self.decoder = [
                CascadeUpBlock(skip_dims[3], d, rng),
                CascadeUpBlock(d, d, rng),
                CascadeUpBlock(d, d, rng),
            ]
        elif cfg.swin_decoder:
            self.decoder = [
                DecoderStage(skip_dims[3], skip_dims[2], dec_plans[0], rng),
                DecoderStage(d, skip_dims[1], dec_plans[1], rng),
                DecoderStage(d, skip_dims[0], dec_plans[2], rng),
            ]
        else:  # swin_unet
            self.decoder = [
                ConvDecoderStage(skip_dims[3], skip_dims[2], d, rng),
                ConvDecoderStage(d, skip_dims[1], d, rng),
                ConvDecoderStage(d, skip_dims[0], d, rng),
            ]

        self.head_main = FinalHead(d, cfg.low_level_dim, rng)
        s2_dim = skip_dims[3] if (cfg.dual_branch and cfg.s2_source == "fused") else fine_plans[3].dim
        self.head_s2 = AuxHead(s2_dim, 32, rng)
        self.head_s3 = AuxHead(d, 16, rng)

        self.last_consumption: dict = {}

    # -- forward -------------------------------------------------------------

    def forward(self, image: Tensor) -> Prediction:
        cfg = self.cfg
        B, H, W, _ = image.shape
        if H != W:
            raise ShapeMismatch(f"forward: expected square input, got ({H},{W})")
        cfg.validate(H)  # every stage resolution must stay divisible

        low_full, low_half = self.low_level(image)
        fine, coarse = self.encoder(image)

        if cfg.dual_branch:
            skips = [self.fuse[i](fine[i], coarse[i]) for i in range(4)]
        else:
            skips = list(fine.stages)

        consumed = []
        x = skips[3]
        if cfg.mode == "base":
            x = self.decoder[0](x)
            s3_src = x
            x = self.decoder[1](x)
            x = self.decoder[2](x)
        else:
            x = self.decoder[0](x, skips[2])
            consumed.append(3)
            s3_src = x
            x = self.decoder[1](x, skips[1])
            consumed.append(2)
            x = self.decoder[2](x, skips[0])
            consumed.append(1)
        self.last_consumption = {"init": 4, "skips": consumed}

        s1 = self.head_main(x, low_full, low_half)
        s2_src = skips[3] if (cfg.dual_branch and cfg.s2_source == "fused") else fine[3]
        s2 = self.head_s2(s2_src)
        s3 = self.head_s3(s3_src)
        return Prediction(s1, s2, s3)

    __call__ = forward

    # -- checkpoint interchange ----------------------------------------------

    def load_state(self, state: dict) -> None:
        """Load name -> array, rejecting missing/extra/mismatched entries."""
        params = {name: p for name, p in self.named_parameters()}
        for name in params:
            if name not in state:
                raise ShapeMismatch(f"checkpoint missing parameter {name!r}")
        for name, value in state.items():
            if name not in params:
                raise ShapeMismatch(f"checkpoint has unknown parameter {name!r}")
            p = params[name]
            if tuple(value.shape) != p.shape:
                raise ShapeMismatch(
                    f"checkpoint parameter {name!r} has shape {tuple(value.shape)}, expected {p.shape}"
                )
            p.data = np.asarray(value, dtype=np.float64)


def build_model(cfg: ModelConfig, seed: int = 0) -> SegModel:
    model = SegModel(cfg, seed=seed)
    model.parameters()  # stamp dotted names
    return model
