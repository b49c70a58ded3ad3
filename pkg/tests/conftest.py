import numpy as np
import pytest

from vewaves.params import ModelParams
from vewaves.spectral import make_grid


@pytest.fixture(scope="session")
def default_params():
    return ModelParams(nu=1.0, nu_prime=0.0, beta=1.0, gamma=1.0)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 2.0 * np.pi)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 8.0 * np.pi)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def constrained_mode(rng, xi):
    """Random 13-vector on the constraint manifold at wavevector xi."""
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    w = rng.normal(size=3) + 1j * rng.normal(size=3)
    u = np.zeros(13, complex)
    u[0] = -1j * np.dot(xi, psi)
    u[1:4] = w
    u[4:13] = (1j * np.outer(psi, xi)).reshape(9)
    return u


def smooth_constrained_state(grid, rng, k_scale=4.0, meanfree=True):
    """Random smooth StateU on the constraint manifold."""
    from vewaves.state import StateU

    def vec():
        s = grid.to_spectral(rng.normal(size=(3,) + grid.phys_shape))
        s *= np.exp(-grid.k2 / k_scale)
        if meanfree:
            s[..., 0, 0, 0] = 0.0
        return s

    return StateU.from_displacement_velocity(grid, vec(), vec())
