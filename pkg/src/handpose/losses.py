"""Training losses and evaluation metrics.

Loss functions run on the autodiff tape and accept single poses (21, 3) or
batches (n, 21, 3); batched calls return the batch mean of the per-sample
loss. Metrics are plain numpy over prediction/ground-truth batches.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .graph import SkeletonGraph

_GRAD_FLOOR = 1e-9  # length floor applied to norm gradients at kinks


@dataclass(frozen=True)
class LossWeights:
    """Trade-off weights of the combined objective."""

    proj: float = 0.1
    length: float = 0.01
    direction: float = 0.1
    wass: float = 0.01

    def __post_init__(self):
        for name in ("proj", "length", "direction", "wass"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be nonnegative")


def _batch_mean(per_sample: Tensor) -> Tensor:
    return per_sample if per_sample.ndim == 0 else ad.tmean(per_sample)


def loss_pose(pred, gt) -> Tensor:
    """Mean over joints of 3D Euclidean distance, millimeters."""
    diff = ad.sub(as_tensor(pred), as_tensor(gt))
    dist = ad.l2norm_rows(diff, grad_floor=_GRAD_FLOOR)  # (..., 21)
    return _batch_mean(ad.tmean(dist, axis=-1))


def loss_proj(pred2d, gt2d) -> Tensor:
    """Mean over joints of 2D Euclidean distance."""
    diff = ad.sub(as_tensor(pred2d), as_tensor(gt2d))
    dist = ad.l2norm_rows(diff, grad_floor=_GRAD_FLOOR)
    return _batch_mean(ad.tmean(dist, axis=-1))


def bone_vectors(pose, graph: SkeletonGraph) -> Tensor:
    """Joint coordinates to the 20 bone vectors: a constant incidence-matrix
    multiply (child minus parent per row), hence translation invariant."""
    return ad.matmul(as_tensor(graph.incidence), as_tensor(pose))


def loss_len(pred, gt, graph: SkeletonGraph) -> Tensor:
    """Sum over bones of the absolute bone-length difference, millimeters."""
    pred_len = ad.l2norm_rows(bone_vectors(pred, graph), grad_floor=_GRAD_FLOOR)
    gt_len = ad.l2norm_rows(bone_vectors(gt, graph), grad_floor=_GRAD_FLOOR)
    per_bone = ad.absolute(ad.sub(gt_len, pred_len))
    return _batch_mean(ad.tsum(per_bone, axis=-1))


def loss_dir(pred, gt, graph: SkeletonGraph) -> Tensor:
    """Sum over bones of the distance between unit bone directions."""
    pred_bones = bone_vectors(pred, graph)
    gt_bones = bone_vectors(gt, graph)
    for name, bones in (("predicted", pred_bones), ("ground-truth", gt_bones)):
        lengths = np.sqrt((bones.data ** 2).sum(axis=-1))
        if np.any(lengths <= _GRAD_FLOOR):
            raise ValueError(f"{name} pose has a zero-length bone; direction undefined")
    pred_unit = ad.normalize_rows(pred_bones, grad_floor=_GRAD_FLOOR)
    gt_unit = ad.normalize_rows(gt_bones, grad_floor=_GRAD_FLOOR)
    chord = ad.l2norm_rows(ad.sub(gt_unit, pred_unit), grad_floor=_GRAD_FLOOR)
    return _batch_mean(ad.tsum(chord, axis=-1))


def total_loss(pred, gt, graph: SkeletonGraph, weights: LossWeights,
               fake_scores=None) -> Tensor:
    """Weighted sum: pose + proj + length + direction + adversarial terms.

    The adversarial term is -mean(fake_scores); it requires critic scores
    whenever weights.wass is nonzero. Zero-weight terms are skipped, which
    leaves the value and every gradient unchanged.
    """
    from .kinematics import project_2d

    total = loss_pose(pred, gt)
    if weights.proj != 0.0:
        total = ad.add(total, ad.scale(loss_proj(project_2d(pred), project_2d(gt)), weights.proj))
    if weights.length != 0.0:
        total = ad.add(total, ad.scale(loss_len(pred, gt, graph), weights.length))
    if weights.direction != 0.0:
        total = ad.add(total, ad.scale(loss_dir(pred, gt, graph), weights.direction))
    if weights.wass != 0.0:
        if fake_scores is None:
            raise ValueError("fake_scores required when the adversarial weight is nonzero")
        total = ad.add(total, ad.scale(ad.neg(_batch_mean(as_tensor(fake_scores))), weights.wass))
    return total


# ---------------------------------------------------------------------------
# evaluation metrics (plain numpy)


@dataclass(frozen=True)
class PckCurve:
    """Fraction of correct keypoints per threshold, plus normalized AUC."""

    thresholds: np.ndarray
    values: np.ndarray
    auc: float


def joint_errors(pred_batch: np.ndarray, gt_batch: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred_batch, dtype=np.float64)
    gt = np.asarray(gt_batch, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"batch shapes differ: {pred.shape} vs {gt.shape}")
    return np.sqrt(((pred - gt) ** 2).sum(axis=-1))


def metric_mean_error(pred_batch: np.ndarray, gt_batch: np.ndarray) -> float:
    """Mean over samples and joints of 3D Euclidean error, millimeters."""
    errors = joint_errors(pred_batch, gt_batch)
    if errors.size == 0:
        raise ValueError("empty batch")
    return float(errors.mean())


def metric_pck(pred_batch: np.ndarray, gt_batch: np.ndarray,
               thresholds: np.ndarray) -> PckCurve:
    """Per threshold, the fraction of (sample, joint) pairs whose error does
    not exceed it; a joint exactly at the threshold counts as correct."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size == 0 or np.any(thresholds <= 0) or np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be positive and strictly ascending")
    errors = joint_errors(pred_batch, gt_batch).reshape(-1)
    if errors.size == 0:
        raise ValueError("empty batch")
    values = np.array([(errors <= t).mean() for t in thresholds])
    span = thresholds[-1] - thresholds[0]
    auc = float(np.trapezoid(values, thresholds) / span) if span > 0 else float(values[0])
    return PckCurve(thresholds=thresholds, values=values, auc=auc)


def metric_bone_direction_error(pred_batch: np.ndarray, gt_batch: np.ndarray,
                                graph: SkeletonGraph) -> float:
    """Mean over samples and bones of the unit-direction chord length."""
    pred_b = graph.incidence @ np.asarray(pred_batch, dtype=np.float64)
    gt_b = graph.incidence @ np.asarray(gt_batch, dtype=np.float64)
    pred_u = pred_b / np.linalg.norm(pred_b, axis=-1, keepdims=True)
    gt_u = gt_b / np.linalg.norm(gt_b, axis=-1, keepdims=True)
    return float(np.linalg.norm(gt_u - pred_u, axis=-1).mean())


def pck_csv(curve: PckCurve, mean_error_mm: float) -> str:
    """Curve rows plus the one-line summary, as CSV text."""
    buf = io.StringIO()
    buf.write("threshold_mm,pck\n")
    for t, v in zip(curve.thresholds, curve.values):
        buf.write(f"{float(t)!r},{float(v)!r}\n")
    buf.write("mean_error_mm,auc\n")
    buf.write(f"{float(mean_error_mm)!r},{float(curve.auc)!r}\n")
    return buf.getvalue()
