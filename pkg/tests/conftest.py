import numpy as np
import pytest

from inviscid_lab.initial_data import random_smooth
from inviscid_lab.spectral import SpectralField, TorusGrid


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(64)


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(32)


def band_limited(grid, seed, kmax=4, amplitude=1.0):
    return random_smooth(grid, seed=seed, kmax=kmax, amplitude=amplitude)


def mean_zero_noise(grid, seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((grid.n, grid.n))
    return SpectralField(grid, values=vals - np.mean(vals))
