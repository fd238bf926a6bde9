import pytest
import numpy as np

from modelext.grid_io import SampledGrid1D, SampledGrid2D, sample_function_1d, sample_function_2d
from modelext.models import Model1D, Model2D


@pytest.fixture
def rng():
    """Seeded generator for property checks"""
    return np.random.default_rng(20240611)


@pytest.fixture
def two_exponentials():
    """2*(1.1)^x - 0.5*(0.7)^x sampled at h=0.1 on [0, 10]"""
    return sample_function_1d(lambda x: 2.0 * 1.1 ** x - 0.5 * 0.7 ** x, 0.0, 10.0, 0.1)


@pytest.fixture
def doubling_grid():
    """3*2^x sampled at h=0.1 on [0, 3]"""
    return sample_function_1d(lambda x: 3.0 * 2.0 ** x, 0.0, 3.0, 0.1)


@pytest.fixture
def zero_grid():
    return SampledGrid1D(a=0.0, h=0.1, values=np.zeros(41))


@pytest.fixture
def separable_grid():
    """2^x * 3^y sampled at h=0.1 on [0, 1]^2"""
    return sample_function_2d(lambda x, y: 2.0 ** x * 3.0 ** y, 0.0, 1.0, 0.1)


@pytest.fixture
def separable_model():
    """Product model satisfied by 2^x * 3^y at lag 0.1"""
    rx, ry = 2.0 ** 0.1, 3.0 ** 0.1
    return Model2D(m=2, n=1, P=[[rx * ry, -rx], [-ry, 1.0]])


@pytest.fixture
def constant_grid_2d():
    return SampledGrid2D(x0=0.0, y0=0.0, h=0.25, values=np.full((5, 5), 1.5))


@pytest.fixture
def window_sum_model():
    """2x2 model whose windows sum to zero: constants satisfy it"""
    return Model2D(m=2, n=1, P=[[1.0, -1.0], [-1.0, 1.0]])


@pytest.fixture
def doubling_model():
    return Model1D(m=1, n=1, p=[2.0])
