import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from nfmimo.geometry import AntennaArray, FrequencyGrid, ImagingConfig, VoxelGrid


def make_config(n_tx=2, n_rx=3, n_freqs=5, shape=(7, 7, 7), seed=0, standoff=0.45):
    """Small randomized config; antennas jittered in the z=0 plane."""
    rng = np.random.default_rng(seed)
    tx = tuple((float(x), float(y), 0.0) for x, y in rng.uniform(-0.15, 0.15, (n_tx, 2)))
    rx = tuple((float(x), float(y), 0.0) for x, y in rng.uniform(-0.15, 0.15, (n_rx, 2)))
    grid = VoxelGrid(*shape, 0.02, 0.02, 0.012, (0.0, 0.0, standoff))
    return ImagingConfig(AntennaArray(tx, rx), FrequencyGrid(4e9, 16e9, n_freqs), grid)


@pytest.fixture
def small_config():
    return make_config()


def random_volume(grid, seed=0, complex_values=True):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape)
    if complex_values:
        v = v + 1j * rng.standard_normal(grid.shape)
    return v.astype(np.complex128)


def random_measurement(config, seed=0):
    rng = np.random.default_rng(seed)
    m = config.n_measurements
    return rng.standard_normal(m) + 1j * rng.standard_normal(m)
