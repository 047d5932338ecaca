import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gaugephase import DephasingSpinModel

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def preset():
    return DephasingSpinModel(mu_b=1.0, lam=0.5, theta=np.pi / 3)


def random_state(rng, dim=2):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)
