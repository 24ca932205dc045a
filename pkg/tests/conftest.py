import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.linalg import expm

from mesofluct.gaussian_core import GaussianState, SymplecticSpace

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_symplectic(rng, n_modes, scale=0.6):
    space = SymplecticSpace.canonical(n_modes)
    h = rng.normal(size=(2 * n_modes, 2 * n_modes)) * scale
    return expm(space.form @ (h + h.T) / 2)


def random_state(rng, n_modes=2, noise=0.5):
    """Valid Gaussian state: squeezed vacuum through a random symplectic map plus thermal noise."""
    space = SymplecticSpace.canonical(n_modes)
    s = random_symplectic(rng, n_modes)
    g = rng.normal(size=(2 * n_modes, 2 * n_modes))
    cov = 0.5 * s @ s.T + noise * rng.uniform() * g @ g.T / (2 * n_modes)
    return GaussianState(space, rng.normal(size=2 * n_modes), cov)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_state():
    return random_state


@pytest.fixture
def make_symplectic():
    return random_symplectic


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
