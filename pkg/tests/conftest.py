import numpy as np
import pytest
from hypothesis import strategies as st

from ecftest.core import FunctionalDataset, Grid


def random_dataset(rng, sizes=(5, 6, 7), J=6, a=0.0, b=1.0):
    grid = Grid.uniform(J, a, b)
    arrays = [rng.normal(size=(n, J)) * rng.uniform(0.5, 2.0) for n in sizes]
    return FunctionalDataset.from_arrays(arrays, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20161025)


@pytest.fixture
def small_dataset(rng):
    return random_dataset(rng)


@st.composite
def datasets(draw, max_k=4, max_n=8, max_J=7):
    """Random small datasets with generic (nondegenerate) curves."""
    k = draw(st.integers(2, max_k))
    J = draw(st.integers(2, max_J))
    sizes = draw(st.lists(st.integers(2, max_n), min_size=k, max_size=k))
    seed = draw(st.integers(0, 2**32 - 1))
    a = draw(st.floats(-5, 5))
    length = draw(st.floats(0.1, 10))
    return random_dataset(np.random.default_rng(seed), sizes, J, a, a + length)
