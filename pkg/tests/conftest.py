import numpy as np
import pytest

from qtel import FluctuatorSpec, SystemSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_system(b0=1.0, g=0.3, theta=0.0, gamma=0.1, eta=0.0, white_noise=None):
    """Single-fluctuator system with the coupling tilted by theta from z."""
    gvec = g * np.array([np.sin(theta), 0.0, np.cos(theta)])
    return SystemSpec(
        b0=b0,
        fluctuators=(FluctuatorSpec(g=gvec, gamma=gamma, eta=eta),),
        white_noise=white_noise,
    )


@pytest.fixture
def strong_mixed_system():
    """Strong coupling at the mixed working point (the fig2 parameters)."""
    return make_system(b0=1.0, g=0.3, theta=np.pi / 4, gamma=0.1, eta=0.0)
