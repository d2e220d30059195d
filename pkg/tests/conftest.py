import numpy as np
import pytest

from dcsi.channel import RngSeed


@pytest.fixture
def appd_alpha():
    a = np.ones((7, 7))
    a[0, 0] = 0.0
    a[4, 5] = 0.3
    return a


@pytest.fixture
def fig2_alpha():
    return np.array([[1.0, 0.5], [0.0, 0.7]])


@pytest.fixture
def seed():
    return RngSeed(12345, 0)


def random_unit(rng, k):
    v = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    return v / np.linalg.norm(v)
