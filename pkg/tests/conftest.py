import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from warmstart_hmc.core import RegularityMeta
from warmstart_hmc.potentials import PotentialOracle

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class FreeParticle(PotentialOracle):
    """Zero potential (nominal beta = 1 so that metadata stays valid)."""

    def __init__(self, d):
        super().__init__(d, RegularityMeta(alpha=0.0, beta=1.0))

    def _value(self, x):
        return np.zeros(x.shape[:-1])

    def _grad(self, x):
        return np.zeros_like(x)

    def _hessian_apply(self, x, v):
        return np.zeros_like(v)

    def _third_apply(self, x, v, w):
        return np.zeros_like(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def free_particle():
    return FreeParticle
