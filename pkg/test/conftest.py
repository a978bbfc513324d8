"""Shared small cascade: A = 2, b = 1.5, K = 1 on a 256 grid."""

import pytest

from inverse_cascade.cascade import build_cascade
from inverse_cascade.ladder import LadderParams, build_ladder
from inverse_cascade.spectral_core import Grid2D

SMALL = LadderParams(A=2.0, b=1.5, K=1)


@pytest.fixture(scope="session")
def small_grid():
    return Grid2D(256)


@pytest.fixture(scope="session")
def small_ladder(small_grid):
    return build_ladder(SMALL, small_grid)


@pytest.fixture(scope="session")
def small_cascade(small_ladder, small_grid):
    return build_cascade(small_ladder, small_grid)
