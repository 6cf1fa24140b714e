import numpy as np
import pytest

from omnilens.numerics import tensor as T


@pytest.fixture(autouse=True)
def _reset_precision():
    yield
    T.set_precision("f32")


@pytest.fixture
def f64():
    with T.precision("f64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(0)
