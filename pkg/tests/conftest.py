"""Shared fixtures for the test suites"""

import os
import sys

import numpy as np
import pytest
import structlog

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.blackbox import from_spectrum, haar_random  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def haar_box(rng):
    return haar_random(1, rng)


@pytest.fixture
def comb_box():
    """n=3 box with eigenphases 0, π/4, ..., 7π/4"""
    return from_spectrum(np.arange(8) * np.pi / 4, np.random.default_rng(7))


@pytest.fixture
def make_state(rng):
    """Factory for normalized random complex vectors"""

    def make(dimension):
        vector = rng.standard_normal(dimension) + 1j * rng.standard_normal(dimension)
        return vector / np.linalg.norm(vector)

    return make


@pytest.fixture(autouse=True)
def reset_logging():
    """Undo any structlog configuration made by the runner"""
    yield
    structlog.reset_defaults()
