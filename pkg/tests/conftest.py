import numpy as np
import pytest

from lieensemble.liecore import AlgebraElement, descriptor


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_algebra(family, n, rng, max_norm=2.0):
    return descriptor(family, n).random_element(rng, max_norm)


def power_series_exp(a, terms=60):
    """Truncated Taylor series; fine for the modest norms used in tests."""
    out = np.eye(a.shape[0], dtype=a.dtype)
    term = np.eye(a.shape[0], dtype=a.dtype)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


FAMILIES = [("so", 3), ("so", 4), ("sl", 2), ("sl", 3), ("su", 2), ("su", 3)]
