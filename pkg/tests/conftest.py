import numpy as np
import pytest

from gdnls.initial_data import random_band
from gdnls.spectral import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid():
    return GridSpec(32)


@pytest.fixture
def random_field(grid, rng):
    def make(max_freq=12, h1_target=1.0):
        return random_band(grid, rng, max_freq=max_freq, h1_target=h1_target)

    return make
