"""Hot numeric kernels: numba-jitted when available, pure numpy otherwise.

Set HANDPOSE_NUMBA=0 to force the numpy fallback even when numba is
installed. Both paths implement identical arithmetic; benchmarks/bench_kernels.py
compares their throughput. Within one backend the kernels are bit-deterministic.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    njit = None
    NUMBA_AVAILABLE = False


def _env_wants_numba() -> bool:
    flag = os.environ.get("HANDPOSE_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


USE_NUMBA = NUMBA_AVAILABLE and _env_wants_numba()


# ---------------------------------------------------------------------------
# Gaussian blob splatting: one grid per pose, cell value = max over joints.


def render_grid_numpy(u: np.ndarray, v: np.ndarray, size: int, sigma: float) -> np.ndarray:
    """u, v: joint positions in cell units (col, row). Returns (size, size)."""
    cols = np.arange(size, dtype=np.float64)
    rows = np.arange(size, dtype=np.float64)
    d2 = (u[:, None, None] - cols[None, None, :]) ** 2 + (v[:, None, None] - rows[None, :, None]) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma)).max(axis=0)


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def render_grid_numba(u, v, size, sigma):  # pragma: no cover - jitted
        grid = np.zeros((size, size))
        inv = 1.0 / (2.0 * sigma * sigma)
        # exp(-88) < 1e-38: tails below that cannot affect any comparison
        d2_cut = 88.0 / inv
        for r in range(size):
            for c in range(size):
                best_d2 = d2_cut
                for j in range(u.shape[0]):
                    du = u[j] - c
                    dv = v[j] - r
                    d2 = du * du + dv * dv
                    if d2 < best_d2:
                        best_d2 = d2
                if best_d2 < d2_cut:
                    grid[r, c] = np.exp(-best_d2 * inv)
        return grid

else:
    render_grid_numba = None


# ---------------------------------------------------------------------------
# Fused bias-corrected Adam update over one flat parameter array (in place).


def adam_update_numpy(p, g, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def adam_update_numba(p, g, m, v, t, lr, beta1, beta2, eps):  # pragma: no cover - jitted
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for i in range(p.shape[0]):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            p[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)

else:
    adam_update_numba = None


render_grid = render_grid_numba if USE_NUMBA else render_grid_numpy
adam_update = adam_update_numba if USE_NUMBA else adam_update_numpy
