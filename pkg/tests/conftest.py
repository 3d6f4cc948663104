import numpy as np
import pytest

from tools.onsager_geometry import MeanFunction
from tools.reaction_network import QMatrix, build_network, random_detailed_balanced, two_point_network
from utils.rng import stream_for


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-size tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def canonical_network():
    """X1 <-> X2 with unit rates: x^s = (1/2, 1/2), omega = 1/2."""
    return two_point_network(1.0, 1.0)


@pytest.fixture
def asymmetric_network():
    """X1 <-> X2 with x^s = (1/3, 2/3), omega = 2/3."""
    return two_point_network(2.0, 1.0)


@pytest.fixture
def ring3():
    return build_network(QMatrix.from_rows([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]))


@pytest.fixture
def random_network():
    def make(d: int, seed: int = 0):
        return random_detailed_balanced(d, stream_for(seed, "geometry", d))
    return make


@pytest.fixture
def kl():
    return MeanFunction.logarithmic()


@pytest.fixture
def geometric():
    return MeanFunction.geometric()


@pytest.fixture
def interior_points():
    def make(d: int, n: int, seed: int = 1, margin: float = 0.1):
        rng = np.random.default_rng(seed)
        return margin / d + (1.0 - margin) * rng.dirichlet(np.ones(d), size=n)
    return make
