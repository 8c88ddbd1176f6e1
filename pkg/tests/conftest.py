import numpy as np
import pytest

from lchoice import BinaryScenario, gen_binary
from lchoice.numcore import TrainConfig


@pytest.fixture(scope="session")
def binary_data():
    """Small fixed train/test pair shared by the cheaper fitting tests."""
    sc = BinaryScenario(n_train=400, n_test=100, seed=11)
    return sc.split(gen_binary(sc))


@pytest.fixture()
def quick_config():
    return TrainConfig(epochs=6, batch_size=64, dropout=0.0, seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
