"""Checkpoint serialization: one JSON document, byte-stable round trips.

Floats are written with repr precision so load(save(x)) reproduces every
parameter bit-for-bit, and save(load(path)) reproduces the file bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig

FORMAT_VERSION = 1
STAGES = ("I", "II", "III")


class CheckpointError(Exception):
    """Malformed checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an incompatible format version."""


@dataclass
class AdamSnapshot:
    step_count: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


@dataclass
class Checkpoint:
    stage: str
    epoch: int
    config: TrainConfig
    params: dict[str, np.ndarray]
    optimizers: dict[str, AdamSnapshot] = field(default_factory=dict)
    spectral: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)  # name -> {u, v}
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")


def _encode_array(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "values": arr.reshape(-1).tolist()}


def _decode_array(name: str, blob) -> np.ndarray:
    if not isinstance(blob, dict) or "shape" not in blob or "values" not in blob:
        raise CheckpointError(f"array {name!r} is malformed")
    arr = np.asarray(blob["values"], dtype=np.float64)
    try:
        return arr.reshape(blob["shape"])
    except ValueError as exc:
        raise CheckpointError(f"array {name!r} has inconsistent shape") from exc


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    doc = {
        "version": ckpt.version,
        "stage": ckpt.stage,
        "epoch": ckpt.epoch,
        "config": ckpt.config.to_dict(),
        "params": {name: _encode_array(arr) for name, arr in ckpt.params.items()},
        "optimizers": {
            group: {
                "step_count": snap.step_count,
                "m": {name: _encode_array(arr) for name, arr in snap.m.items()},
                "v": {name: _encode_array(arr) for name, arr in snap.v.items()},
            }
            for group, snap in ckpt.optimizers.items()
        },
        "spectral": {
            name: {"u": _encode_array(uv["u"]), "v": _encode_array(uv["v"])}
            for name, uv in ckpt.spectral.items()
        },
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text, encoding="utf-8")


def load_checkpoint(path: str | Path, expected_params: set[str] | None = None) -> Checkpoint:
    """Load and validate. expected_params, when given, must all be present;
    the first missing name is reported."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: checkpoint must be a JSON object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")
    for key in ("stage", "epoch", "config", "params"):
        if key not in doc:
            raise CheckpointError(f"{path}: missing checkpoint field {key!r}")
    config = TrainConfig.from_dict(doc["config"])
    params = {name: _decode_array(name, blob) for name, blob in doc["params"].items()}
    if expected_params is not None:
        for name in sorted(expected_params):
            if name not in params:
                raise CheckpointError(f"{path}: missing parameter array {name!r}")
    optimizers = {}
    for group, blob in doc.get("optimizers", {}).items():
        optimizers[group] = AdamSnapshot(
            step_count=int(blob["step_count"]),
            m={name: _decode_array(f"{group}.m.{name}", b) for name, b in blob["m"].items()},
            v={name: _decode_array(f"{group}.v.{name}", b) for name, b in blob["v"].items()},
        )
    spectral = {
        name: {"u": _decode_array(f"spectral.{name}.u", b["u"]),
               "v": _decode_array(f"spectral.{name}.v", b["v"])}
        for name, b in doc.get("spectral", {}).items()
    }
    return Checkpoint(stage=doc["stage"], epoch=int(doc["epoch"]), config=config,
                      params=params, optimizers=optimizers, spectral=spectral,
                      version=version)
