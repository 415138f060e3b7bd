"""Shared test helpers: small random instances with frozen seeds."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_symmetric_adjacency(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Binary undirected adjacency with zero diagonal, as a dense array."""
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return (upper | upper.T).astype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
