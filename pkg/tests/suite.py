"""Random admissible configurations shared by the property and acceptance tests."""

import numpy as np

from haptofv import Grid, InitialData, ModelParams, SchemeConfig


def random_initial_data(grid: Grid, rng: np.random.Generator) -> InitialData:
    x = grid.centers[0]
    psi = np.zeros(grid.shape)
    for _ in range(rng.integers(1, 4)):
        c = rng.uniform(-1.0, 1.0)
        w = rng.uniform(0.2, 0.5)
        psi += rng.uniform(0.05, 1.0) * np.exp(-((x - c) ** 2) / (2 * w * w))
    kind = rng.integers(0, 3)
    if kind == 0:
        lo, hi = np.sort(rng.uniform(0.0, 2.0 / 3.0, 2))
        phi = np.where(x < rng.uniform(-1, 1), lo, hi)
    elif kind == 1:
        k = rng.uniform(0.5, 3.0)
        phase = rng.uniform(0, 2 * np.pi)
        phi = (2.0 / 3.0) * 0.5 * (1 + np.sin(k * x + phase))
    else:
        # ECM with a vacuum patch
        c = rng.uniform(-1.0, 1.0)
        phi = np.clip(rng.uniform(0.2, 2.0 / 3.0) * (np.abs(x - c) - 0.3), 0.0, 2.0 / 3.0)
    return InitialData(psi, np.clip(phi, 0.0, 2.0 / 3.0), strict_bound=True)


def random_case(seed: int, n: int = 128, t_end: float = 0.5):
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(-5.0, 5.0, n)
    alpha, D, R0, gamma = rng.uniform(0.1, 2.0, 4)
    delta = 0.0 if rng.random() < 0.5 else rng.uniform(0.1, 2.0)
    params = ModelParams(alpha=alpha, D=D, R0=R0, gamma=gamma, delta=delta)
    return grid, params, random_initial_data(grid, rng), SchemeConfig(t_end=t_end, max_dt=1e-2)
