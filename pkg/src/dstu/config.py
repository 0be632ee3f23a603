"""Model and run configuration, with flat key=value config files.

ModelConfig captures the full architecture: the two patch scales, per-stage
depths/heads/dims, the window size, decoder layout, and the ablation mode.
Validation happens before any compute: every stage resolution of every
branch (and of every training scale factor) must be divisible by its
effective window size, with window sizes clamped to the stage extent when
the configured window would exceed it.
"""

from __future__ import annotations

import dataclasses

MODES = ("base", "swin_unet", "swin_decoder", "multiscale_sd", "ds_transunet")
DUAL_MODES = ("multiscale_sd", "ds_transunet")
SWIN_DECODER_MODES = ("swin_decoder", "multiscale_sd", "ds_transunet")


class ConfigError(ValueError):
    """Configuration violates an architectural constraint."""


@dataclasses.dataclass
class StagePlan:
    resolution: int
    dim: int
    depth: int
    heads: int
    window: int


@dataclasses.dataclass
class ModelConfig:
    mode: str = "ds_transunet"
    image_size: int = 64
    in_channels: int = 3
    patch_primary: int = 4
    patch_complementary: int = 8
    dim_primary: int = 16
    dim_complementary: int = 8
    depths: tuple = (2, 2, 2, 2)
    heads: tuple = (1, 2, 4, 8)
    window: int = 4
    decoder_dim: int = 32
    decoder_depths: tuple = (2, 2, 2)
    decoder_heads: tuple = (8, 4, 2)
    low_level_dim: int = 16
    s2_source: str = "fused"  # "fused" | "primary"
    fuse_mode: str = "merge"  # "merge" | "f_only"
    clamp_windows: bool = True

    # -- shape planning ------------------------------------------------------

    def branch_plan(self, patch: int, base_dim: int, image_size: int | None = None) -> list[StagePlan]:
        """Per-stage (resolution, dim, depth, heads, window) for one branch.

        Stage i sits at resolution (H/patch)/2^(i-1) with dim base_dim*2^(i-1).
        Raises ConfigError when any extent fails divisibility.
        """
        size = self.image_size if image_size is None else image_size
        if size % (patch * 8) != 0:
            raise ConfigError(
                f"image size {size} not divisible by patch*8 = {patch * 8} (stage-4 resolution)"
            )
        plans = []
        res = size // patch
        for i in range(4):
            dim = base_dim * (2**i)
            heads = self.heads[i]
            if dim % heads != 0:
                raise ConfigError(f"stage {i + 1}: dim {dim} not divisible by heads {heads}")
            if self.depths[i] % 2 != 0:
                raise ConfigError(f"stage {i + 1}: depth {self.depths[i]} must be even (W/SW pairs)")
            window = self._stage_window(res, f"patch-{patch} stage {i + 1}")
            plans.append(StagePlan(res, dim, self.depths[i], heads, window))
            res //= 2
        return plans

    def decoder_plan(self, image_size: int | None = None) -> list[StagePlan]:
        """Decoder stages at H/16, H/8, H/4 with constant decoder_dim."""
        size = self.image_size if image_size is None else image_size
        plans = []
        for i, res in enumerate((size // 16, size // 8, size // 4)):
            heads = self.decoder_heads[i]
            if self.decoder_dim % heads != 0:
                raise ConfigError(
                    f"decoder stage {i + 1}: dim {self.decoder_dim} not divisible by heads {heads}"
                )
            window = self._stage_window(res, f"decoder stage {i + 1}")
            plans.append(StagePlan(res, self.decoder_dim, self.decoder_depths[i], heads, window))
        return plans

    def _stage_window(self, resolution: int, where: str) -> int:
        window = self.window
        if window > resolution:
            if not self.clamp_windows:
                raise ConfigError(
                    f"{where}: window {window} exceeds resolution {resolution} and clamping is off"
                )
            window = resolution
        if resolution % window != 0:
            raise ConfigError(f"{where}: resolution {resolution} not divisible by window {window}")
        return window

    def validate(self, image_size: int | None = None) -> None:
        size = self.image_size if image_size is None else image_size
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.s2_source not in ("fused", "primary"):
            raise ConfigError(f"s2_source must be 'fused' or 'primary', got {self.s2_source!r}")
        if self.fuse_mode not in ("merge", "f_only"):
            raise ConfigError(f"fuse_mode must be 'merge' or 'f_only', got {self.fuse_mode!r}")
        if len(self.depths) != 4 or len(self.heads) != 4:
            raise ConfigError("depths and heads must list exactly 4 stages")
        if len(self.decoder_depths) != 3 or len(self.decoder_heads) != 3:
            raise ConfigError("decoder_depths and decoder_heads must list exactly 3 stages")
        self.branch_plan(self.patch_primary, self.dim_primary, size)
        if self.dual_branch:
            self.branch_plan(self.patch_complementary, self.dim_complementary, size)
        self.decoder_plan(size)

    def validate_runtime_size(self, size: int) -> None:
        """Check that an input extent (e.g. a rescaled training batch) keeps
        every stage divisible by the window sizes fixed at the base size."""
        branches = [(self.patch_primary, self.dim_primary, "primary")]
        if self.dual_branch:
            branches.append((self.patch_complementary, self.dim_complementary, "complementary"))
        for patch, dim, label in branches:
            plans = self.branch_plan(patch, dim)  # windows clamped at base size
            if size % (patch * 8) != 0:
                raise ConfigError(f"size {size} not divisible by {label} patch*8 = {patch * 8}")
            res = size // patch
            for i, plan in enumerate(plans):
                if res < plan.window or res % plan.window != 0:
                    raise ConfigError(
                        f"{label} stage {i + 1} at size {size}: resolution {res} incompatible "
                        f"with window {plan.window}"
                    )
                res //= 2
        for i, plan in enumerate(self.decoder_plan()):
            res = size // (16 >> i)
            if res < plan.window or res % plan.window != 0:
                raise ConfigError(
                    f"decoder stage {i + 1} at size {size}: resolution {res} incompatible "
                    f"with window {plan.window}"
                )

    @property
    def dual_branch(self) -> bool:
        return self.mode in DUAL_MODES

    @property
    def swin_decoder(self) -> bool:
        return self.mode in SWIN_DECODER_MODES


@dataclasses.dataclass
class RunConfig:
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 4
    loss_alpha: float = 0.6
    loss_beta: float = 0.2
    loss_gamma: float = 0.2
    weight_lambda: float = 5.0
    weight_kernel: int = 15
    multi_scale_factors: tuple = (0.75, 1.0, 1.25)
    early_stop_patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    data_dir: str = ""
    out_dir: str = "runs/default"

    def scaled_sizes(self) -> list[int]:
        sizes = []
        for f in self.multi_scale_factors:
            scaled = self.model.image_size * f
            if abs(scaled - round(scaled)) > 1e-9:
                raise ConfigError(
                    f"scale factor {f} yields non-integer resolution {scaled} from {self.model.image_size}"
                )
            sizes.append(int(round(scaled)))
        return sizes

    def validate(self) -> None:
        if min(self.loss_alpha, self.loss_beta, self.loss_gamma) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.weight_kernel % 2 == 0 or self.weight_kernel < 1:
            raise ConfigError("weight_kernel must be odd and positive")
        if not self.multi_scale_factors:
            raise ConfigError("multi_scale_factors must not be empty")
        self.model.validate()
        for size in self.scaled_sizes():
            self.model.validate(size)


# -- key=value config files ---------------------------------------------------

_MODEL_KEYS = {
    "mode": str,
    "image_size": int,
    "in_channels": int,
    "patch_primary": int,
    "patch_complementary": int,
    "dim_primary": int,
    "dim_complementary": int,
    "depths": "int_list",
    "heads": "int_list",
    "window": int,
    "decoder_dim": int,
    "decoder_depths": "int_list",
    "decoder_heads": "int_list",
    "low_level_dim": int,
    "s2_source": str,
    "fuse_mode": str,
    "clamp_windows": "bool",
}

_RUN_KEYS = {
    "optimizer.lr": ("lr", float),
    "optimizer.momentum": ("momentum", float),
    "optimizer.weight_decay": ("weight_decay", float),
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
    "train.multi_scale_factors": ("multi_scale_factors", "float_list"),
    "train.early_stop_patience": ("early_stop_patience", int),
    "train.val_fraction": ("val_fraction", float),
    "loss.alpha": ("loss_alpha", float),
    "loss.beta": ("loss_beta", float),
    "loss.gamma": ("loss_gamma", float),
    "loss.weight_lambda": ("weight_lambda", float),
    "loss.weight_kernel": ("weight_kernel", int),
    "seed": ("seed", int),
    "data.dir": ("data_dir", str),
    "out.dir": ("out_dir", str),
}


def _convert(kind, raw: str, key: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int_list":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "float_list":
            return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse value {raw!r}")
    raise AssertionError(kind)


def parse_config_text(text: str) -> RunConfig:
    """Parse flat `dotted.key=value` lines; unknown keys are errors."""
    cfg = RunConfig(model=ModelConfig())
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key.startswith("model."):
            field = key[len("model.") :]
            if field not in _MODEL_KEYS:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            setattr(cfg.model, field, _convert(_MODEL_KEYS[field], raw, key))
        elif key in _RUN_KEYS:
            attr, kind = _RUN_KEYS[key]
            setattr(cfg, attr, _convert(kind, raw, key))
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def dump_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig back to key=value text (stable ordering)."""
    m = cfg.model
    lines = [
        f"model.mode={m.mode}",
        f"model.image_size={m.image_size}",
        f"model.in_channels={m.in_channels}",
        f"model.patch_primary={m.patch_primary}",
        f"model.patch_complementary={m.patch_complementary}",
        f"model.dim_primary={m.dim_primary}",
        f"model.dim_complementary={m.dim_complementary}",
        "model.depths=" + ",".join(str(d) for d in m.depths),
        "model.heads=" + ",".join(str(h) for h in m.heads),
        f"model.window={m.window}",
        f"model.decoder_dim={m.decoder_dim}",
        "model.decoder_depths=" + ",".join(str(d) for d in m.decoder_depths),
        "model.decoder_heads=" + ",".join(str(h) for h in m.decoder_heads),
        f"model.low_level_dim={m.low_level_dim}",
        f"model.s2_source={m.s2_source}",
        f"model.fuse_mode={m.fuse_mode}",
        f"model.clamp_windows={str(m.clamp_windows).lower()}",
        f"optimizer.lr={cfg.lr}",
        f"optimizer.momentum={cfg.momentum}",
        f"optimizer.weight_decay={cfg.weight_decay}",
        f"train.epochs={cfg.epochs}",
        f"train.batch_size={cfg.batch_size}",
        "train.multi_scale_factors=" + ",".join(str(f) for f in cfg.multi_scale_factors),
        f"train.early_stop_patience={cfg.early_stop_patience}",
        f"train.val_fraction={cfg.val_fraction}",
        f"loss.alpha={cfg.loss_alpha}",
        f"loss.beta={cfg.loss_beta}",
        f"loss.gamma={cfg.loss_gamma}",
        f"loss.weight_lambda={cfg.weight_lambda}",
        f"loss.weight_kernel={cfg.weight_kernel}",
        f"seed={cfg.seed}",
        f"data.dir={cfg.data_dir}",
        f"out.dir={cfg.out_dir}",
    ]
    return "\n".join(lines) + "\n"
