import numpy as np
import pytest

from spatial_holes.channel import StructuredChannel


def cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_channel(rng):
    return StructuredChannel(cgauss(rng, (2, 3, 4)))
