"""Run configuration: one dataclass mirrored by the YAML config files."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

VARIANTS = ("mvs", "similarity", "cross_attention")
ANCHOR_TYPES = ("mean", "single", "individual")
E_SOURCES = ("pre_fusion", "post_fusion")
THRESHOLD_RULES = ("eer", "fixed")

DEFAULT_POSITIVE_TEXTS = [
    "real face",
    "bonafide face",
    "genuine face",
    "true face",
    "verified face",
]
DEFAULT_NEGATIVE_TEXTS = [
    "spoof face",
    "attack face",
    "fake face",
    "false face",
    "deceptive face",
]


class ConfigurationError(ValueError):
    """Raised when a run configuration is inconsistent."""


@dataclass
class RunConfig:
    # data / protocol
    data_root: str = "data"
    domains: list[str] = field(default_factory=lambda: ["alpha", "beta", "gamma", "delta"])
    target: str = "alpha"

    # text bank (positives first is contractual; first num_views pairs are used)
    positive_texts: list[str] = field(default_factory=lambda: list(DEFAULT_POSITIVE_TEXTS))
    negative_texts: list[str] = field(default_factory=lambda: list(DEFAULT_NEGATIVE_TEXTS))
    num_views: int = 3
    ctx_len: int = 16

    # backbone
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 128      # shared image/text feature dimension
    vit_dim: int = 128
    vit_depth: int = 4
    vit_heads: int = 4
    text_depth: int = 2
    weights_path: str | None = None

    # slot attention
    i_max: int = 3
    epsilon: float = 1e-8

    # patch alignment
    alpha: float = 10.0
    anchor_type: str = "mean"
    e_source: str = "pre_fusion"

    # ablation switches
    variant: str = "mvs"
    gape: bool = True
    use_mvs: bool = True
    use_mtpa: bool = True

    # optimization
    learning_rate: float = 2e-4
    weight_decay: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    threshold_rule: str = "eer"

    def validate(self) -> "RunConfig":
        if self.target not in self.domains:
            raise ConfigurationError(f"target {self.target!r} not in domains {self.domains}")
        if len(self.domains) != len(set(self.domains)):
            raise ConfigurationError("domain names must be unique")
        if self.num_views < 1:
            raise ConfigurationError("num_views must be >= 1")
        if self.num_views > min(len(self.positive_texts), len(self.negative_texts)):
            raise ConfigurationError(
                f"num_views={self.num_views} exceeds the configured text bank size"
            )
        if self.ctx_len < 1:
            raise ConfigurationError("ctx_len must be >= 1")
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if self.alpha <= 0:
            raise ConfigurationError("alpha must be positive")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.anchor_type not in ANCHOR_TYPES:
            raise ConfigurationError(f"anchor_type must be one of {ANCHOR_TYPES}")
        if self.e_source not in E_SOURCES:
            raise ConfigurationError(f"e_source must be one of {E_SOURCES}")
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ConfigurationError(f"threshold_rule must be one of {THRESHOLD_RULES}")
        for name, value in [
            ("learning_rate", self.learning_rate),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ]:
            if value < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")
        return self

    def with_overrides(self, **kwargs) -> "RunConfig":
        unknown = set(kwargs) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} must hold a mapping")
        return cls.from_dict(data)

    def to_file(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)
