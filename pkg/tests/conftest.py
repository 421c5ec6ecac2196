import numpy as np
import pytest

from rankalign.model import LayerSchema


@pytest.fixture
def schema3():
    return LayerSchema((("c1", 3), ("c2", 5), ("c3", 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
