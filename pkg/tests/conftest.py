import numpy as np
import pytest

from twoscale.lti import LtiBlockSystem
from twoscale.specnorm import log_norm


def random_lti(rng, max_dim=6, margin=0.2):
    """Block system with D and A_red contracting in the 2-norm.

    A_red is drawn first and A is set to A_red + B D^{-1} C.
    """
    while True:
        nx, nz = (int(v) for v in rng.integers(1, max_dim + 1, 2))
        D = -(1.0 + rng.uniform()) * np.eye(nz) + 0.5 * rng.standard_normal((nz, nz))
        if log_norm(D) >= -margin:
            continue
        B = 0.8 * rng.standard_normal((nx, nz))
        C = 0.8 * rng.standard_normal((nz, nx))
        M = -(0.5 + rng.uniform()) * np.eye(nx) + 0.3 * rng.standard_normal((nx, nx))
        if log_norm(M) >= -margin:
            continue
        return LtiBlockSystem(M + B @ np.linalg.solve(D, C), B, C, D)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def desk_lti():
    # x' = x + z, eps z' = -3x - z
    return LtiBlockSystem(np.array([[1.0]]), np.array([[1.0]]), np.array([[-3.0]]), np.array([[-1.0]]))
