"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from handpose import backend
from handpose.rendering import GRID_SIZE, SIGMA_CELLS


def timeit(fn, repeats: int) -> float:
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_render(n_poses: int = 500, repeats: int = 5):
    rng = np.random.default_rng(0)
    u = rng.uniform(0, GRID_SIZE, (n_poses, 21))
    v = rng.uniform(0, GRID_SIZE, (n_poses, 21))

    def run(kernel):
        for i in range(n_poses):
            kernel(u[i], v[i], GRID_SIZE, SIGMA_CELLS)

    rows = [("render/numpy", timeit(lambda: run(backend.render_grid_numpy), repeats))]
    if backend.NUMBA_AVAILABLE:
        backend.render_grid_numba(u[0], v[0], GRID_SIZE, SIGMA_CELLS)  # compile
        rows.append(("render/numba", timeit(lambda: run(backend.render_grid_numba), repeats)))
    return [(name, t / n_poses) for name, t in rows]


def bench_adam(size: int = 200_000, steps: int = 50, repeats: int = 3):
    rng = np.random.default_rng(1)
    g = rng.standard_normal(size)

    def run(kernel):
        p = np.ones(size)
        m = np.zeros(size)
        v = np.zeros(size)
        for t in range(1, steps + 1):
            kernel(p, g, m, v, t, 1e-3, 0.9, 0.999, 1e-8)

    rows = [("adam/numpy", timeit(lambda: run(backend.adam_update_numpy), repeats))]
    if backend.NUMBA_AVAILABLE:
        run(backend.adam_update_numba)  # compile
        rows.append(("adam/numba", timeit(lambda: run(backend.adam_update_numba), repeats)))
    return [(name, t / steps) for name, t in rows]


def main():
    print(f"numba available: {backend.NUMBA_AVAILABLE}; selected backend: "
          f"{'numba' if backend.USE_NUMBA else 'numpy'} (HANDPOSE_NUMBA)")
    print(f"{'kernel':<16}{'per call':>14}")
    for name, per_call in bench_render() + bench_adam():
        print(f"{name:<16}{per_call * 1e6:>11.1f} us")


if __name__ == "__main__":
    main()
