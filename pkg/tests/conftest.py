from fractions import Fraction

import pytest

from presslab.timing import default_timing


@pytest.fixture(scope="session")
def tp():
    return default_timing()


def F(x) -> Fraction:
    return Fraction(x)
