import numpy as np
import pytest

from flowsentry.synth import generate_digits


@pytest.fixture(scope="session")
def digits_small():
    """300 synthetic digits shared across tests that need real-ish images."""
    return generate_digits(300, seed=42)


@pytest.fixture(scope="session")
def digits_train_test():
    full = generate_digits(700, seed=43)
    return full.take(range(0, 500), "train"), full.take(range(500, 700), "test")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
