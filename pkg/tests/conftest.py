import numpy as np
import pytest

from fastdiff_lab import closedform as cf
from fastdiff_lab import geometry as geo


@pytest.fixture(scope="session")
def params33():
    """The n=3, m=2/3 workhorse: p=3, beta=1, eta_cr=1/2."""
    return cf.derive_params(3, 2.0 / 3.0, 1.0)


@pytest.fixture(scope="session")
def grid12():
    return geo.make_grid(12.0, 1200)


@pytest.fixture(scope="session")
def grid_coarse():
    return geo.make_grid(12.0, 300)


def gaussian_profile(grid, center=1.5, width=1.0, ell=0):
    s = grid.nodes
    vals = np.exp(-((s - center) / width) ** 2)
    if ell >= 1:
        vals = vals * np.tanh(s) ** ell
        vals[0] = 0.0
    return geo.GridFunction(grid, ell, vals)
