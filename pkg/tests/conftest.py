import numpy as np
import pytest

from channelns.grid import make_grid

TAU = 2 * np.pi


@pytest.fixture(scope="session")
def g8():
    return make_grid(8, 8, 9, TAU, TAU, 1.0)


@pytest.fixture(scope="session")
def g16():
    return make_grid(16, 16, 17, TAU, TAU, 1.0)


@pytest.fixture(scope="session")
def g16z33():
    return make_grid(16, 16, 33, TAU, TAU, 1.0)


@pytest.fixture(scope="session")
def g32():
    return make_grid(32, 32, 33, TAU, TAU, 1.0)


def ones_like_grid(grid):
    return np.ones((grid.nx, grid.ny, grid.nz))
