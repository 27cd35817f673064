import numpy as np
import pytest

from moller_lab import dirac, geom, grid


@pytest.fixture(scope="session")
def ultrastatic():
    return geom.ultrastatic_metric("ultra")


@pytest.fixture(scope="session")
def cosmological():
    return geom.make_metric("1", "1 + 0.3*tanh(t)", "cosmo")


@pytest.fixture(scope="session")
def grid_small():
    return grid.Grid(64, 512, -3.0, 3.0)


@pytest.fixture(scope="session")
def dirac_ultra(ultrastatic):
    return dirac.dirac_system(ultrastatic)


@pytest.fixture(scope="session")
def dirac_cosmo(cosmological):
    return dirac.dirac_system(cosmological)


@pytest.fixture(scope="session")
def x_nodes():
    return np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
