import numpy as np
import pytest


@pytest.fixture
def gen():
    return np.random.default_rng(20260826)


def random_points(gen, n, d, scale=1.0):
    return gen.uniform(-scale, scale, size=(n, d))
