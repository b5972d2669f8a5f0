"""The 21-node skeleton graph: adjacency, normalization, bone incidence."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .skeleton import N_BONES, N_JOINTS, default_template


@dataclass(frozen=True)
class SkeletonGraph:
    """Constant graph structure shared by every forward pass.

    adjacency: 21x21 binary symmetric, zero diagonal, 20 undirected edges.
    normalized: symmetric-normalized adjacency with self-loops.
    incidence: 20x21, row per bone with +1 at the child and -1 at the parent,
    ordered finger-major proximal to distal.
    """

    adjacency: np.ndarray
    normalized: np.ndarray
    incidence: np.ndarray


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise ValueError("adjacency must be binary")
    with_loops = a + np.eye(a.shape[0])
    inv_sqrt_deg = 1.0 / np.sqrt(with_loops.sum(axis=1))
    return with_loops * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


@lru_cache(maxsize=1)
def build_hand_graph() -> SkeletonGraph:
    """Wrist connected to each MCP, chain edges inside each finger."""
    template = default_template()
    parents = template.parents
    adjacency = np.zeros((N_JOINTS, N_JOINTS))
    incidence = np.zeros((N_BONES, N_JOINTS))
    for bone, child in enumerate(range(1, N_JOINTS)):
        parent = parents[child]
        adjacency[parent, child] = adjacency[child, parent] = 1.0
        incidence[bone, child] = 1.0
        incidence[bone, parent] = -1.0
    normalized = normalize_adjacency(adjacency)
    for arr in (adjacency, normalized, incidence):
        arr.setflags(write=False)
    return SkeletonGraph(adjacency, normalized, incidence)
