"""Synthetic dataset generation and the JSON Lines dataset format.

Each sample is a rendering (the network input) plus ground-truth 3D pose,
2D projection, and the generating parameters. Generation is deterministic
given the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kinematics, rendering
from .skeleton import SkeletonTemplate, default_template

PARAM_DIM = 33

C_T_RANGE_MM = 20.0
C_S_RANGE = (0.8, 1.2)
C_R_MAX_ANGLE = np.pi / 2


@dataclass
class HandParams:
    """Generator latent code: 20 joint angles, 6 shape scales, camera."""

    theta: np.ndarray  # (20,) radians
    beta: np.ndarray   # (6,) unitless
    c_r: np.ndarray    # (3,) axis-angle
    c_t: np.ndarray    # (3,) mm
    c_s: float         # > 0

    def __post_init__(self):
        if self.c_s <= 0:
            raise ValueError("c_s must be strictly positive")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.beta, self.c_r, self.c_t, [self.c_s]])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "HandParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (PARAM_DIM,):
            raise ValueError(f"parameter vector must have {PARAM_DIM} entries, got {vec.shape}")
        return cls(theta=vec[:20].copy(), beta=vec[20:26].copy(),
                   c_r=vec[26:29].copy(), c_t=vec[29:32].copy(), c_s=float(vec[32]))


@dataclass
class Sample:
    rendering: np.ndarray   # (32, 32) in [0, 1]
    gt_pose3d: np.ndarray   # (21, 3) mm
    gt_pose2d: np.ndarray   # (21, 2) mm
    gt_params: HandParams


@dataclass
class Dataset:
    """Column view of a sample list, shaped for batched training."""

    renderings: np.ndarray  # (n, 1024)
    poses3d: np.ndarray     # (n, 21, 3)
    poses2d: np.ndarray     # (n, 21, 2)
    params: np.ndarray      # (n, 33)

    def __len__(self) -> int:
        return self.renderings.shape[0]


def sample_params(rng: np.random.Generator, n: int) -> tuple[np.ndarray, ...]:
    """Draw n parameter sets from the sampling ranges, batched."""
    theta = np.empty((n, 20))
    lo, hi = kinematics.THETA_FLEXION_RANGE
    theta[:, :] = rng.uniform(lo, hi, size=(n, 20))
    alo, ahi = kinematics.THETA_ABDUCTION_RANGE
    theta[:, kinematics.MCP_ABDUCT::4] = rng.uniform(alo, ahi, size=(n, 5))
    beta = rng.uniform(*kinematics.BETA_RANGE, size=(n, 6))
    axis = rng.standard_normal((n, 3))
    axis /= np.maximum(np.linalg.norm(axis, axis=1, keepdims=True), 1e-12)
    angle = rng.uniform(0.0, C_R_MAX_ANGLE, size=(n, 1))
    c_r = axis * angle
    c_t = rng.uniform(-C_T_RANGE_MM, C_T_RANGE_MM, size=(n, 3))
    c_s = rng.uniform(*C_S_RANGE, size=(n, 1))
    return theta, beta, c_r, c_t, c_s


def sample_synthetic(seed: int, n: int,
                     template: SkeletonTemplate | None = None) -> list[Sample]:
    """Generate n samples; identical seeds give bit-identical datasets."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if template is None:
        template = default_template()
    rng = np.random.default_rng(seed)
    theta, beta, c_r, c_t, c_s = sample_params(rng, n)

    canonical = kinematics.forward_kinematics(theta, beta, template).data
    posed = kinematics.apply_camera(canonical, c_r, c_t, c_s).data
    poses2d = posed[..., :2]
    grids = rendering.render_batch(poses2d)

    samples = []
    for i in range(n):
        params = HandParams(theta=theta[i], beta=beta[i], c_r=c_r[i],
                            c_t=c_t[i], c_s=float(c_s[i, 0]))
        samples.append(Sample(rendering=grids[i], gt_pose3d=posed[i],
                              gt_pose2d=poses2d[i].copy(), gt_params=params))
    return samples


def to_dataset(samples: list[Sample]) -> Dataset:
    return Dataset(
        renderings=np.stack([s.rendering.reshape(-1) for s in samples]),
        poses3d=np.stack([s.gt_pose3d for s in samples]),
        poses2d=np.stack([s.gt_pose2d for s in samples]),
        params=np.stack([s.gt_params.to_vector() for s in samples]),
    )


def write_jsonl(samples: list[Sample], path: str | Path) -> None:
    """One JSON object per line; floats keep full round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            record = {
                "rendering": s.rendering.reshape(-1).tolist(),
                "pose3d": s.gt_pose3d.reshape(-1).tolist(),
                "pose2d": s.gt_pose2d.reshape(-1).tolist(),
                "params": s.gt_params.to_vector().tolist(),
            }
            fh.write(json.dumps(record))
            fh.write("\n")


def read_jsonl(path: str | Path) -> Dataset:
    renderings, poses3d, poses2d, params = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno} is not valid JSON: {exc}") from exc
            for key, count in (("rendering", 1024), ("pose3d", 63),
                               ("pose2d", 42), ("params", PARAM_DIM)):
                if key not in record:
                    raise ValueError(f"{path}: line {lineno} is missing field {key!r}")
                if len(record[key]) != count:
                    raise ValueError(
                        f"{path}: line {lineno} field {key!r} has {len(record[key])} "
                        f"values, expected {count}")
            renderings.append(np.asarray(record["rendering"], dtype=np.float64))
            poses3d.append(np.asarray(record["pose3d"], dtype=np.float64).reshape(21, 3))
            poses2d.append(np.asarray(record["pose2d"], dtype=np.float64).reshape(21, 2))
            params.append(np.asarray(record["params"], dtype=np.float64))
    if not renderings:
        raise ValueError(f"{path}: dataset is empty")
    return Dataset(renderings=np.stack(renderings), poses3d=np.stack(poses3d),
                   poses2d=np.stack(poses2d), params=np.stack(params))
