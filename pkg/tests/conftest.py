import numpy as np
import pytest

from mmvtc import MMVProblem


def random_problem(seed, n=6, m=15, l=3, lam=0.1):
    """Arbitrary well-conditioned problem with unit-norm columns."""
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((n, m))
    phi /= np.linalg.norm(phi, axis=0)
    y = rng.standard_normal((n, l))
    return MMVProblem(phi, y, noise_level=lam)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
