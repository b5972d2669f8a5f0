"""Gaussian-blob renderer: peak placement, tails, shift equivariance."""

import numpy as np
import pytest

from handpose.rendering import (
    CELL_PITCH_MM,
    GRID_SIZE,
    SIGMA_CELLS,
    render,
    render_batch,
    to_grid_coords,
)


def far_pose(offset=5000.0):
    return np.full((21, 2), offset)


class TestRender:
    def test_far_outside_window_is_near_zero(self):
        grid = render(far_pose())
        assert np.all(grid < 1e-6)

    def test_single_joint_at_window_center(self):
        pose = far_pose()
        pose[0] = (0.0, 0.0)  # world origin maps to cell (16, 16)
        grid = render(pose)
        assert grid[16, 16] == 1.0
        expected = np.exp(-0.5 / SIGMA_CELLS**2)
        for r, c in ((15, 16), (17, 16), (16, 15), (16, 17)):
            assert grid[r, c] == pytest.approx(expected, rel=1e-12)

    def test_values_bounded(self):
        rng = np.random.default_rng(0)
        grid = render(rng.uniform(-150, 150, (21, 2)))
        assert np.all(grid >= 0.0) and np.all(grid <= 1.0)

    def test_one_cell_shift_equivariance(self):
        rng = np.random.default_rng(1)
        pose = rng.uniform(-80, 80, (21, 2))
        shifted = pose.copy()
        shifted[:, 0] += CELL_PITCH_MM
        a = render(pose)
        b = render(shifted)
        # interior cells are identical after a one-cell shift
        assert np.abs(a[:, :-1] - b[:, 1:]).max() < 1e-9

    def test_grid_orientation_row_is_y(self):
        pose = far_pose()
        pose[0] = (0.0, 30.0)  # +y moves 4 cells along the row axis
        grid = render(pose)
        assert grid[20, 16] == 1.0

    def test_to_grid_coords_affine(self):
        u, v = to_grid_coords(np.array([[-120.0, -120.0]]))
        assert (u[0], v[0]) == (0.0, 0.0)
        u, v = to_grid_coords(np.array([[0.0, 0.0]]))
        assert (u[0], v[0]) == (16.0, 16.0)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        poses = rng.uniform(-100, 100, (3, 21, 2))
        grids = render_batch(poses)
        assert grids.shape == (3, GRID_SIZE, GRID_SIZE)
        for i in range(3):
            assert np.array_equal(grids[i], render(poses[i]))
