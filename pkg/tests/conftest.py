import numpy as np
import pytest

from sm_transport.noise import NoiseSpec, TimeGrid, deterministic_path, sample_path


def draw_paths(kind, n_steps, n_paths, hurst=None, horizon=1.0, base_seed=0):
    grid = TimeGrid(horizon, n_steps)
    return [sample_path(NoiseSpec(kind, grid, base_seed + i, hurst)) for i in range(n_paths)]


def sine_path(n_steps, horizon=1.0):
    return deterministic_path(np.sin, TimeGrid(horizon, n_steps), "sin")


@pytest.fixture
def wiener_path():
    return sample_path(NoiseSpec("wiener", TimeGrid(1.0, 1024), seed=7))
