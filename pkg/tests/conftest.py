import math

import numpy as np
import pytest

from inexact_newton.majorant import quadratic
from inexact_newton.problems import builtin_corpus, builtin_spec
from inexact_newton.solver import OperatorProblem


@pytest.fixture(scope="session")
def corpus():
    return builtin_corpus()


@pytest.fixture(scope="session")
def sqrt2():
    return builtin_spec("sqrt2").build()


@pytest.fixture(scope="session")
def circle_line():
    return builtin_spec("circle_line").build()


@pytest.fixture
def sqrt2_raw():
    """x^2 - 2 built by hand, independent of the problem-file machinery."""
    p = OperatorProblem(lambda x: x**2 - 2.0, lambda x: np.diag(2.0 * x), np.array([1.5]), name="sqrt2")
    return p, quadratic(2.0 / 3.0, 1.0 / 12.0)


SQRT2 = math.sqrt(2.0)
