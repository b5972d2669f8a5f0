"""Adam with bias correction, spectral weight normalization, and init helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import backend
from .autodiff import Tensor


@dataclass
class AdamState:
    """First/second moment buffers for an ordered parameter group."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params],
                   beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray],
              state: AdamState, lr: float) -> None:
    """One in-place bias-corrected Adam update; rejects non-finite gradients."""
    if len(params) != len(state.m) or len(grads) != len(state.m):
        raise ValueError("params/grads do not match the optimizer state")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            raise ValueError(f"parameter {i} has no gradient")
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {i}; step rejected")
    state.step_count += 1
    t = state.step_count
    for p, g, m, v in zip(params, grads, state.m, state.v):
        backend.adam_update(p.data.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                            m.reshape(-1), v.reshape(-1),
                            t, lr, state.beta1, state.beta2, state.eps)


@dataclass
class SpectralNormState:
    """Power-iteration vectors estimating the top singular pair of one weight."""

    u: np.ndarray
    v: np.ndarray
    n_iterations: int = 1

    @classmethod
    def init(cls, rng: np.random.Generator, shape: tuple[int, int],
             n_iterations: int = 1,
             matrix: np.ndarray | None = None) -> "SpectralNormState":
        u = rng.standard_normal(shape[0])
        v = rng.standard_normal(shape[1])
        state = cls(u=u / np.linalg.norm(u), v=v / np.linalg.norm(v),
                    n_iterations=n_iterations)
        if matrix is not None:
            # align the estimates with the initial weight so the very first
            # sigma estimate is sane even before any training step
            for _ in range(5):
                state.v = _unit(matrix.T @ state.u, state.v)
                state.u = _unit(matrix @ state.v, state.u)
        return state


def _unit(x: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    if n < 1e-12:
        return fallback
    return x / n


def spectral_normalize(w: Tensor, state: SpectralNormState, update: bool = True) -> Tensor:
    """Divide w by its estimated top singular value.

    With update=True runs state.n_iterations power iterations first (one per
    training step by convention). The sigma estimate is treated as a
    constant during differentiation, and is floored at 1e-12 so a zero
    matrix cannot divide by zero.
    """
    if w.ndim != 2:
        raise ValueError(f"spectral_normalize expects a matrix, got shape {w.shape}")
    W = w.data
    if update:
        for _ in range(state.n_iterations):
            state.v = _unit(W.T @ state.u, state.v)
            state.u = _unit(W @ state.v, state.u)
    sigma = float(state.u @ W @ state.v)
    sigma = max(sigma, 1e-12)
    return ad.scale(w, 1.0 / sigma)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Scale-balanced uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)
