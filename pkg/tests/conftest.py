import numpy as np
import pytest

from srpl.image import GrayImage


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)


def random_gray(rng, h=12, w=12):
    return GrayImage(rng.random((h, w)).astype(np.float32))
