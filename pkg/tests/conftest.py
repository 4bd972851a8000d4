import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")


def random_spd(rng, n, cond=10.0):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    w = np.exp(rng.uniform(0.0, np.log(cond), n))
    a = (q * w) @ q.T
    return 0.5 * (a + a.T)


def random_sym(rng, n, scale=1.0):
    g = scale * rng.standard_normal((n, n))
    return 0.5 * (g + g.T)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
