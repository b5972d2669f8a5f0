"""Run configuration: one serializable record of every schedule, weight,
dimension, and switch, plus the flat key=value config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .losses import LossWeights

REFINEMENT_KINDS = ("gcn", "fc", "none")
CRITIC_KINDS = ("multi", "single", "none")


@dataclass
class TrainConfig:
    seed: int = 7
    train_size: int = 2000
    test_size: int = 500
    batch_size: int = 32

    stage1_epochs: int = 100
    stage2_epochs: int = 100
    stage3_epochs: int = 100
    stage1_lr: float = 0.001
    stage2_lr: float = 0.0001
    stage3_lr: float = 0.0001
    critic_lr: float = 0.0001

    lambda_proj: float = 0.1
    lambda_len: float = 0.01
    lambda_dir: float = 0.1
    lambda_wass: float = 0.01

    latent_dim: int = 32
    feature_dim: int = 64
    encoder_hidden: int = 128
    hidden_dim: int = 128
    res_blocks: int = 4
    resblock_activation: bool = True

    critic_update_ratio: int = 1
    critic_gram_bones: bool = False

    refinement: str = "gcn"
    critic: str = "multi"
    enable_loss_len: bool = True
    enable_loss_dir: bool = True

    pck_min_mm: float = 20.0
    pck_max_mm: float = 50.0
    pck_steps: int = 16

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not (0 < self.pck_min_mm < self.pck_max_mm):
            raise ValueError("PCK thresholds require 0 < pck_min_mm < pck_max_mm")
        for name in ("train_size", "test_size", "batch_size", "stage1_epochs",
                     "stage2_epochs", "stage3_epochs", "latent_dim", "feature_dim",
                     "encoder_hidden", "hidden_dim", "pck_steps",
                     "critic_update_ratio"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        if self.res_blocks < 0:
            raise ValueError("res_blocks must be nonnegative")
        for name in ("stage1_lr", "stage2_lr", "stage3_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        if self.critic_lr < 0:
            raise ValueError("critic_lr must be nonnegative")
        if self.refinement not in REFINEMENT_KINDS:
            raise ValueError(f"refinement must be one of {REFINEMENT_KINDS}")
        if self.critic not in CRITIC_KINDS:
            raise ValueError(f"critic must be one of {CRITIC_KINDS}")

    def loss_weights(self, adversarial: bool) -> LossWeights:
        return LossWeights(
            proj=self.lambda_proj,
            length=self.lambda_len if self.enable_loss_len else 0.0,
            direction=self.lambda_dir if self.enable_loss_dir else 0.0,
            wass=self.lambda_wass if adversarial else 0.0,
        )

    def pck_thresholds(self) -> np.ndarray:
        return np.linspace(self.pck_min_mm, self.pck_max_mm, self.pck_steps)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class AblationVariant:
    """One row group of the ablation table."""

    refinement: str = "gcn"
    critic: str = "multi"
    enable_loss_len: bool = True
    enable_loss_dir: bool = True
    name: str = ""

    def __post_init__(self):
        if self.refinement not in REFINEMENT_KINDS:
            raise ValueError(f"refinement must be one of {REFINEMENT_KINDS}")
        if self.critic not in CRITIC_KINDS:
            raise ValueError(f"critic must be one of {CRITIC_KINDS}")
        if not self.name:
            losses = "+".join(n for n, on in (("len", self.enable_loss_len),
                                              ("dir", self.enable_loss_dir)) if on) or "base"
            object.__setattr__(self, "name",
                               f"{self.refinement}-{self.critic}-{losses}")

    def apply(self, config: TrainConfig) -> TrainConfig:
        return dataclasses.replace(config, refinement=self.refinement,
                                   critic=self.critic,
                                   enable_loss_len=self.enable_loss_len,
                                   enable_loss_dir=self.enable_loss_dir)


def _coerce(name: str, raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {name}: cannot parse boolean from {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ValueError(f"config key {name}: cannot parse {kind.__name__} from {raw!r}") from exc


def parse_config_text(text: str) -> TrainConfig:
    """Parse `key = value` lines; # starts a comment, blank lines ignored."""
    fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in fields:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, types[fields[key]])
    return TrainConfig(**values)


def load_config(path: str | Path) -> TrainConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def parse_variants_text(text: str) -> list[AblationVariant]:
    """One variant per line as space-separated key=value tokens.

    Keys: refinement, critic, loss_len, loss_dir, name. Omitted keys keep
    the full-model defaults.
    """
    variants = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        kwargs: dict = {}
        for token in stripped.split():
            if "=" not in token:
                raise ValueError(f"variants line {lineno}: expected key=value, got {token!r}")
            key, raw = token.split("=", 1)
            if key == "refinement":
                kwargs["refinement"] = raw
            elif key == "critic":
                kwargs["critic"] = raw
            elif key == "loss_len":
                kwargs["enable_loss_len"] = _coerce(key, raw, bool)
            elif key == "loss_dir":
                kwargs["enable_loss_dir"] = _coerce(key, raw, bool)
            elif key == "name":
                kwargs["name"] = raw
            else:
                raise ValueError(f"variants line {lineno}: unknown key {key!r}")
        variants.append(AblationVariant(**kwargs))
    if not variants:
        raise ValueError("variants file defines no variants")
    return variants


def load_variants(path: str | Path) -> list[AblationVariant]:
    return parse_variants_text(Path(path).read_text(encoding="utf-8"))
