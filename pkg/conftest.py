"""Shared fixtures for the test suite."""
import numpy as np
import pytest

from densities.bipartition import Bipartition
from evolution.hamiltonian import Hamiltonian
from lattice.fields import SpinorField
from lattice.grid import GridSpec
from lattice.sampling import StreamId
from scenarios.packets import gaussian_profile


SINGLET = np.array([0.0, 1.0, -1.0, 0.0], dtype=np.complex128) / np.sqrt(2.0)


@pytest.fixture
def line_grid():
    return GridSpec.from_bounds([(-10.0, 10.0, 128)])


@pytest.fixture
def toy_grid():
    return GridSpec.from_bounds([(-4.0, 4.0, 16)])


@pytest.fixture
def toy_plane():
    return GridSpec.from_bounds([(-4.0, 4.0, 8), (-4.0, 4.0, 8)])


@pytest.fixture
def plane_grid():
    return GridSpec.from_bounds([(-8.0, 8.0, 32), (-8.0, 8.0, 32)])


@pytest.fixture
def spin_split():
    return Bipartition((0,), (1,), k1=2, k2=2)


@pytest.fixture
def scalar_split():
    return Bipartition((0,), (1,))


@pytest.fixture
def stream():
    return StreamId(1234, "tests")


def singlet_on(grid, centers=(0.5, -0.5), sigmas=(1.0, 1.2)):
    """Singlet spin state times a product of Gaussians on a two-axis grid."""
    psi1 = gaussian_profile(grid.subgrid((0,)), [centers[0]], sigmas[0])
    psi2 = gaussian_profile(grid.subgrid((1,)), [centers[1]], sigmas[1])
    spatial = np.multiply.outer(psi1, psi2)
    return SpinorField(grid, spatial[..., np.newaxis] * SINGLET, normalized=True), psi1, psi2


@pytest.fixture
def singlet(plane_grid):
    return singlet_on(plane_grid)


@pytest.fixture
def free_line(line_grid):
    return Hamiltonian(line_grid, 1, [1.0])
