import numpy as np
import pytest

from dnls_nfr.spectral import FrequencyGrid, random_field, rng_stream


@pytest.fixture
def rand():
    """rand(grid, s, *keys) -> unit H^s random field from a keyed stream."""
    def make(grid, s=0.6, *keys):
        return random_field(grid, s, rng_stream(1234, *keys))
    return make


@pytest.fixture
def grid16():
    return FrequencyGrid(16, 2 * np.pi)
