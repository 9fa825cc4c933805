# conftest.py
"""Shared fixtures for the quadlab test suite."""

import pytest

from discriminants import enumerate_family
from models import ModelConfig, TruncationParams


@pytest.fixture
def family_10():
    return enumerate_family(10)


@pytest.fixture
def loose_params():
    """lambda = 3.5 with a tolerance no small family can exceed."""
    return TruncationParams(epsilon=0.25, lambda_value=3.5, consistency_tol=10.0)


@pytest.fixture
def small_model():
    return ModelConfig(epsilon=0.25, prime_cutoff=100, seed=7)
