"""Differentiable forward kinematics and the camera transform.

All functions accept plain arrays or Tensors and return Tensors; with no
active tape they are ordinary numpy computations. Inputs may carry leading
batch axes: theta (..., 20), beta (..., 6), poses (..., 21, 3).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .skeleton import FINGERS, SkeletonTemplate

# Per-finger angle slots inside the 20-entry theta vector.
MCP_FLEX, MCP_ABDUCT, PIP_FLEX, DIP_FLEX = 0, 1, 2, 3

THETA_FLEXION_RANGE = (-0.5, 1.8)
THETA_ABDUCTION_RANGE = (-0.35, 0.35)
BETA_RANGE = (0.7, 1.3)

_SERIES_CUTOFF = 1e-6  # squared angle below which the Taylor branch is exact enough


def _sinc_sqrt(s: Tensor) -> Tensor:
    """sin(sqrt(s))/sqrt(s) as a smooth function of s >= 0."""
    s = as_tensor(s)
    sd = s.data
    small = sd < _SERIES_CUTOFF
    safe = np.where(small, 1.0, sd)
    phi = np.sqrt(safe)
    closed = np.sin(phi) / phi
    series = 1.0 - sd / 6.0 + sd * sd / 120.0
    out = np.where(small, series, closed)

    def vjp(g: np.ndarray) -> np.ndarray:
        d_closed = (phi * np.cos(phi) - np.sin(phi)) / (2.0 * safe * phi)
        d_series = -1.0 / 6.0 + sd / 60.0 - sd * sd / 1680.0
        return g * np.where(small, d_series, d_closed)

    return ad._record(out, ((s, vjp),))


def _versine_ratio(s: Tensor) -> Tensor:
    """(1 - cos(sqrt(s)))/s as a smooth function of s >= 0."""
    s = as_tensor(s)
    sd = s.data
    small = sd < _SERIES_CUTOFF
    safe = np.where(small, 1.0, sd)
    phi = np.sqrt(safe)
    closed = (1.0 - np.cos(phi)) / safe
    series = 0.5 - sd / 24.0 + sd * sd / 720.0
    out = np.where(small, series, closed)

    def vjp(g: np.ndarray) -> np.ndarray:
        d_closed = (phi * np.sin(phi) / 2.0 - (1.0 - np.cos(phi))) / (safe * safe)
        d_series = -1.0 / 24.0 + sd / 360.0 - sd * sd / 13440.0
        return g * np.where(small, d_series, d_closed)

    return ad._record(out, ((s, vjp),))


def skew(v) -> Tensor:
    """Cross-product matrix of each 3-vector: (..., 3) -> (..., 3, 3)."""
    v = as_tensor(v)
    vd = v.data
    if vd.shape[-1] != 3:
        raise ValueError(f"skew expects 3-vectors, got shape {v.shape}")
    K = np.zeros(vd.shape[:-1] + (3, 3))
    x, y, z = vd[..., 0], vd[..., 1], vd[..., 2]
    K[..., 0, 1] = -z
    K[..., 0, 2] = y
    K[..., 1, 0] = z
    K[..., 1, 2] = -x
    K[..., 2, 0] = -y
    K[..., 2, 1] = x

    def vjp(g: np.ndarray) -> np.ndarray:
        out = np.empty(vd.shape)
        out[..., 0] = g[..., 2, 1] - g[..., 1, 2]
        out[..., 1] = g[..., 0, 2] - g[..., 2, 0]
        out[..., 2] = g[..., 1, 0] - g[..., 0, 1]
        return out

    return ad._record(K, ((v, vjp),))


def rot_about_axis(axis: np.ndarray, angle) -> Tensor:
    """Rotation matrices about a fixed unit axis: angle (...,) -> (..., 3, 3)."""
    axis = np.asarray(axis, dtype=np.float64)
    K = np.zeros((3, 3))
    K[0, 1], K[0, 2] = -axis[2], axis[1]
    K[1, 0], K[1, 2] = axis[2], -axis[0]
    K[2, 0], K[2, 1] = -axis[1], axis[0]
    K2 = K @ K
    angle = as_tensor(angle)
    th = angle.data
    s = np.sin(th)[..., None, None]
    c = np.cos(th)[..., None, None]
    out = np.eye(3) + s * K + (1.0 - c) * K2

    def vjp(g: np.ndarray) -> np.ndarray:
        dR = c * K + s * K2
        return (g * dR).sum(axis=(-2, -1))

    return ad._record(out, ((angle, vjp),))


def rodrigues(r) -> Tensor:
    """Axis-angle vectors to rotation matrices: (..., 3) -> (..., 3, 3).

    Uses R = I + A(s) K + B(s) K^2 with s = |r|^2, K = skew(r). A and B are
    series-expanded near zero, so the map is smooth (and exactly the
    identity at r = 0).
    """
    r = as_tensor(r)
    if r.shape[-1] != 3:
        raise ValueError(f"rodrigues expects 3-vectors, got shape {r.shape}")
    s = ad.tsum(ad.mul(r, r), axis=-1)
    a = _sinc_sqrt(s)
    b = _versine_ratio(s)
    K = skew(r)
    KK = ad.matmul(K, K)
    pad = r.shape[:-1] + (1, 1)
    term1 = ad.mul(ad.reshape(a, pad), K)
    term2 = ad.mul(ad.reshape(b, pad), KK)
    eye = np.broadcast_to(np.eye(3), r.shape[:-1] + (3, 3))
    return ad.add(as_tensor(eye.copy()), ad.add(term1, term2))


def forward_kinematics(theta, beta, template: SkeletonTemplate) -> Tensor:
    """Map joint angles and shape scales to joint positions.

    theta (..., 20): per finger MCP flexion, MCP abduction, PIP flexion,
    DIP flexion. beta (..., 6): one global scale then one per finger.
    Output (..., 21, 3) with the wrist at the origin of canonical space.
    Every bone offset is scaled by beta_global * beta_finger; the MCP joint
    applies abduction about the palm normal then flexion about the finger's
    lateral axis, PIP and DIP apply flexion only.
    """
    theta = as_tensor(theta)
    beta = as_tensor(beta)
    if theta.shape[-1] != 20:
        raise ValueError(f"theta must have 20 angles, got shape {theta.shape}")
    if beta.shape[-1] != 6:
        raise ValueError(f"beta must have 6 scales, got shape {beta.shape}")
    lead = theta.shape[:-1]
    beta_global = ad.slice_axis(beta, 0, 1)

    joints: list[Tensor] = [as_tensor(np.zeros(lead + (1, 3)))]
    for f in range(len(FINGERS)):
        scale_f = ad.mul(beta_global, ad.slice_axis(beta, 1 + f, 2 + f))  # (..., 1)
        flex_axis = template.flexion_axes[f]

        def angle(slot: int) -> Tensor:
            col = 4 * f + slot
            return ad.reshape(ad.slice_axis(theta, col, col + 1), lead)

        r_abd = rot_about_axis(template.abduction_axis, angle(MCP_ABDUCT))
        r_flex = rot_about_axis(flex_axis, angle(MCP_FLEX))
        rot = ad.matmul(r_abd, r_flex)

        base = 1 + 4 * f
        pos = ad.mul(scale_f, as_tensor(template.offsets[base]))  # (..., 3)
        joints.append(ad.reshape(pos, lead + (1, 3)))
        for p, slot in enumerate((PIP_FLEX, DIP_FLEX, None)):
            offset = ad.mul(scale_f, as_tensor(template.offsets[base + 1 + p]))
            moved = ad.matmul(rot, ad.reshape(offset, lead + (3, 1)))
            pos = ad.add(pos, ad.reshape(moved, lead + (3,)))
            joints.append(ad.reshape(pos, lead + (1, 3)))
            if slot is not None:
                rot = ad.matmul(rot, rot_about_axis(flex_axis, angle(slot)))

    return ad.concat(joints, axis=-2)


def apply_camera(pose, c_r, c_t, c_s) -> Tensor:
    """Place a canonical pose in camera space: rotate, scale, translate.

    pose (..., 21, 3); c_r (..., 3) axis-angle; c_t (..., 3); c_s (...,) or
    (..., 1), strictly positive.
    """
    pose = as_tensor(pose)
    c_r, c_t, c_s = as_tensor(c_r), as_tensor(c_t), as_tensor(c_s)
    if np.any(c_s.data <= 0.0):
        raise ValueError("camera scale c_s must be strictly positive")
    lead = pose.shape[:-2]
    rot = rodrigues(c_r)
    rotated = ad.matmul(pose, ad.transpose_last2(rot))
    scaled = ad.mul(rotated, ad.reshape(c_s, lead + (1, 1)))
    return ad.add(scaled, ad.reshape(c_t, lead + (1, 3)))


def project_2d(pose) -> Tensor:
    """Orthographic projection: drop the z coordinate."""
    pose = as_tensor(pose)
    return ad.slice_axis(pose, 0, 2)


def clamp_theta(theta: np.ndarray) -> np.ndarray:
    """Clamp sampled angles to the anatomically plausible ranges."""
    out = np.array(theta, dtype=np.float64)
    flex = np.ones(20, dtype=bool)
    flex[MCP_ABDUCT::4] = False
    out[..., flex] = np.clip(out[..., flex], *THETA_FLEXION_RANGE)
    out[..., ~flex] = np.clip(out[..., ~flex], *THETA_ABDUCTION_RANGE)
    return out
