import numpy as np
import pytest

from phxai.geometry import PointCloud


def random_cloud(rng, n, scale=1.0):
    return PointCloud(rng.normal(size=(n, 3)) * scale)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
