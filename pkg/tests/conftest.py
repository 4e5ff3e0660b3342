"""
Pytest configuration and shared fixtures for tests.
"""

# Add src to Python path for imports
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from deep_ritz import DeepRitzConfig, LocalIntegrand
from net_core import MlpNetwork, random_network
from regularization import FidelityConfig, GridSpec, RegularizerSpec


@pytest.fixture
def rng():
    """Seeded generator for reproducible random networks."""
    return np.random.default_rng(12345)


@pytest.fixture
def tanh_net(rng):
    """Depth-3 tanh network on R^2 with widths 4 and 3."""
    return random_network([2, 4, 3, 1], "tanh", rng)


@pytest.fixture
def tanh_net_1d(rng):
    """Depth-2 tanh network on R."""
    return random_network([1, 6, 1], "tanh", rng)


@pytest.fixture
def relu_net():
    """Hand-built depth-2 ReLU network u(z) = relu(z) - 2 relu(z - 1) + 0.5."""
    return MlpNetwork(
        (np.array([[1.0], [1.0]]), np.array([[1.0, -2.0]])),
        (np.array([0.0, -1.0]), np.array([0.5])),
        "relu",
    )


@pytest.fixture
def dr_example():
    """The 1D Deep Ritz example: T = 1, u0 = 0, uT = 1, alpha_B = 1, nodes 0.2, 0.5, 0.8."""
    return DeepRitzConfig.example_1d(1.0, 0.0, 1.0, 1.0, (0.2, 0.5, 0.8))


@pytest.fixture
def zero_source():
    """Poisson integrand with vanishing source on three nodes."""
    return LocalIntegrand.poisson([0.0, 0.0, 0.0])


@pytest.fixture
def fd_instance():
    """3-node anisotropic TV instance: spacing 1, g = (0, 1, 0), unit weights."""
    grid = GridSpec((0.0,), (1.0,), (3,))
    fid = FidelityConfig(
        (0.0, 1.0, 0.0),
        alpha1=0.0,
        alpha2=1.0,
        data_weights=(1.0, 1.0, 1.0),
        reg_weights=(1.0, 1.0, 1.0),
    )
    return grid, fid, RegularizerSpec.tv(nu=1)


@pytest.fixture
def test_data_dir():
    """Path to test data directory."""
    return Path(__file__).parent / "test_data"
