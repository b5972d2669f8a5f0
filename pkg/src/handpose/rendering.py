"""Low-resolution stand-in imagery: Gaussian blobs splatted per joint.

A 2D pose is mapped affinely from the fixed world window into a 32x32
intensity grid; each joint contributes an isotropic Gaussian of unit peak
and the grid keeps the per-cell maximum. Joints outside the window only
contribute whatever tail reaches the grid.
"""

from __future__ import annotations

import numpy as np

from . import backend

GRID_SIZE = 32
WINDOW_MM = 120.0  # world window is the [-120, 120] mm square
CELL_PITCH_MM = 2.0 * WINDOW_MM / GRID_SIZE
SIGMA_CELLS = 1.5


def to_grid_coords(pose2d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World mm -> fractional cell coordinates (col, row); 0 mm hits cell 16."""
    u = (pose2d[..., 0] + WINDOW_MM) / CELL_PITCH_MM
    v = (pose2d[..., 1] + WINDOW_MM) / CELL_PITCH_MM
    return u, v


def render(pose2d: np.ndarray) -> np.ndarray:
    """Render one 21x2 pose into a (32, 32) grid with values in [0, 1]."""
    pose2d = np.asarray(pose2d, dtype=np.float64)
    u, v = to_grid_coords(pose2d)
    return backend.render_grid(np.ascontiguousarray(u), np.ascontiguousarray(v),
                               GRID_SIZE, SIGMA_CELLS)


def render_batch(poses2d: np.ndarray) -> np.ndarray:
    """Render (n, 21, 2) poses into (n, 32, 32) grids."""
    poses2d = np.asarray(poses2d, dtype=np.float64)
    out = np.empty((poses2d.shape[0], GRID_SIZE, GRID_SIZE))
    for i in range(poses2d.shape[0]):
        out[i] = render(poses2d[i])
    return out
