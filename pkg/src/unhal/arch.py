"""Architecture descriptors.

An ``ArchDescriptor`` is the complete hyperparameter record of a model
family; it round-trips losslessly through JSON and is embedded in every
metadata container so the decoder side can rebuild the exact network.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

FAMILIES = ("encoder_mlp", "siren", "nerf_pe", "hashgrid")
ENCODER_ARCHS = ("nafnet", "base")
INPUT_MODES = {
    "encoder_mlp": ("latent_xy", "latent_only", "xy"),
    "siren": ("xy", "xyrgb"),
    "nerf_pe": ("xy", "xyrgb"),
    "hashgrid": ("xy", "xyrgb"),
}
ALLOWED_K = (0, 32, 64, 128)

# Base channel widths that land the encoder parameter counts on the target
# budget (about 31.75K trainable parameters).
NAFNET_DEFAULT_WIDTH = 18
BASE_ENCODER_DEFAULT_WIDTH = 28


@dataclass(frozen=True)
class ArchDescriptor:
    family: str = "encoder_mlp"
    k: int = 64
    encoder_arch: str = "nafnet"
    encoder_width: int = NAFNET_DEFAULT_WIDTH
    encoder_blocks: int = 1
    mlp_hidden: int = 64
    mlp_layers: int = 2
    input_mode: str = "latent_xy"
    pe_frequencies: int = 10
    siren_omega0: float = 30.0
    hashgrid_levels: int = 16
    hashgrid_features: int = 4
    hashgrid_table_size: int = 512
    hashgrid_base_resolution: int = 16
    hashgrid_growth: float = 1.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}; "
                              f"expected one of {FAMILIES}")
        if self.input_mode not in INPUT_MODES[self.family]:
            raise ConfigError(
                f"input_mode {self.input_mode!r} invalid for family "
                f"{self.family!r}; allowed: {INPUT_MODES[self.family]}")
        if self.family == "encoder_mlp":
            if self.k not in ALLOWED_K:
                raise ConfigError(f"k={self.k} not in {ALLOWED_K}")
            if self.k == 0 and self.input_mode != "xy":
                raise ConfigError("k=0 removes the encoder; input_mode "
                                  "must be 'xy'")
            if self.k > 0 and self.input_mode == "xy":
                raise ConfigError("input_mode 'xy' requires k=0")
            if self.encoder_arch not in ENCODER_ARCHS:
                raise ConfigError(f"unknown encoder_arch "
                                  f"{self.encoder_arch!r}")
            if self.encoder_width < 2 or self.encoder_blocks < 1:
                raise ConfigError("encoder_width must be >= 2 and "
                                  "encoder_blocks >= 1")
        if self.mlp_hidden < 1 or self.mlp_layers < 1:
            raise ConfigError("mlp_hidden and mlp_layers must be positive")
        if self.family == "nerf_pe" and self.pe_frequencies < 1:
            raise ConfigError("pe_frequencies must be >= 1")
        if self.family == "hashgrid":
            if min(self.hashgrid_levels, self.hashgrid_features,
                   self.hashgrid_table_size,
                   self.hashgrid_base_resolution) < 1:
                raise ConfigError("hashgrid dimensions must be positive")
            if self.hashgrid_growth <= 1.0:
                raise ConfigError("hashgrid_growth must exceed 1.0")

    # -- mlp input dimensionality per family/mode ----------------------

    def mlp_input_dim(self) -> int:
        if self.family == "encoder_mlp":
            return {"latent_xy": self.k + 2, "latent_only": self.k,
                    "xy": 2}[self.input_mode]
        if self.family == "siren":
            return 2 if self.input_mode == "xy" else 5
        if self.family == "nerf_pe":
            base = 2 * 2 * self.pe_frequencies
            return base if self.input_mode == "xy" else base + 3
        enc = self.hashgrid_levels * self.hashgrid_features
        return enc if self.input_mode == "xy" else enc + 3

    # -- serialization --------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True,
                          separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ArchDescriptor":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad architecture JSON: {e}") from None
        return cls.from_mapping(payload)

    @classmethod
    def from_mapping(cls, payload: dict) -> "ArchDescriptor":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown architecture keys: "
                              f"{sorted(unknown)}")
        return cls(**payload)


# -- presets matching the evaluated configurations ----------------------


def default_arch(k: int = 64, mlp_hidden: int = 64, mlp_layers: int = 2,
                 encoder_blocks: int = 1,
                 encoder_arch: str = "nafnet") -> ArchDescriptor:
    """Encoder + residual MLP; ``k=0`` drops the encoder."""
    width = (NAFNET_DEFAULT_WIDTH if encoder_arch == "nafnet"
             else BASE_ENCODER_DEFAULT_WIDTH)
    return ArchDescriptor(
        family="encoder_mlp", k=k, encoder_arch=encoder_arch,
        encoder_width=width, encoder_blocks=encoder_blocks,
        mlp_hidden=mlp_hidden, mlp_layers=mlp_layers,
        input_mode="xy" if k == 0 else "latent_xy")


def siren_arch(input_mode: str = "xyrgb") -> ArchDescriptor:
    return ArchDescriptor(family="siren", input_mode=input_mode,
                          mlp_hidden=128, mlp_layers=3)


def nerf_arch(input_mode: str = "xyrgb") -> ArchDescriptor:
    return ArchDescriptor(family="nerf_pe", input_mode=input_mode,
                          mlp_hidden=128, mlp_layers=3, pe_frequencies=10)


def hashgrid_arch(input_mode: str = "xyrgb") -> ArchDescriptor:
    return ArchDescriptor(family="hashgrid", input_mode=input_mode,
                          mlp_hidden=64, mlp_layers=2)
