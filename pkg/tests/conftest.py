"""Shared fixtures: measures and fields reused across the suite.

Session scope matters: quadrature grids and eigendecompositions are cached
per measure object, so sharing the objects keeps the suite fast.
"""

import numpy as np
import pytest

from convexineq import functionals as fn
from convexineq import potentials as pot


@pytest.fixture(scope="session")
def cauchy_1_5():
    return pot.make_cauchy(1, 5.0)


@pytest.fixture(scope="session")
def cauchy_1_10():
    return pot.make_cauchy(1, 10.0)


@pytest.fixture(scope="session")
def cauchy_2_5():
    return pot.make_cauchy(2, 5.0)


@pytest.fixture(scope="session")
def cauchy_2_4():
    return pot.make_cauchy(2, 4.0)


@pytest.fixture(scope="session")
def gaussian_limit_measure():
    return pot.make_limit_family(pot.standard_gaussian_psi(1), 1e4)


@pytest.fixture
def x1_1d():
    return fn.coordinate_field(0, 1)


@pytest.fixture
def x1_2d():
    return fn.coordinate_field(0, 2)


@pytest.fixture
def x2_2d():
    return fn.coordinate_field(1, 2)


def mu_inner(weights: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    return float(np.sum(weights * u * v))
