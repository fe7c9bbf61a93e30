import numpy as np
import pytest

from right_reasons.datasets.schema import LabeledDataset, TabularKind, one_hot
from right_reasons.datasets.toy_color import gen_toy_color
from right_reasons.model.mlp import init_params
from right_reasons.training.settings import RrrConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run the slow reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """A seeded generator for test inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_batch(rng):
    """A 10 x 4 batch with three classes and a random binary annotation matrix."""
    X = rng.normal(size=(10, 4))
    y = one_hot(rng.integers(0, 3, size=10), 3)
    A = (rng.random((10, 4)) < 0.5).astype(np.float64)
    return X, y, A


@pytest.fixture
def small_dataset(small_batch):
    X, y, A = small_batch
    return LabeledDataset(name="small", X=X, y=y, A=A, kind=TabularKind(feature_names=["a", "b", "c", "d"]))


@pytest.fixture
def small_params():
    """A 4 -> 5 -> 3 network."""
    return init_params(4, 3, seed=7, hidden_sizes=(5,))


@pytest.fixture
def toy_color_small():
    return gen_toy_color(200, seed=0)


@pytest.fixture
def quick_config():
    """Training settings small enough for unit tests."""
    return RrrConfig(lambda1=10.0, lambda2=1e-4, batch_size=32, epochs=3, hidden_sizes=[10], early_stop_patience=0)
