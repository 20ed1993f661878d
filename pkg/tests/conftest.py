import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from confgeo.dsl import builtin_metric, metric_from_mapping

settings.register_profile(
    "confgeo",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("confgeo")


@pytest.fixture(scope="session")
def flat():
    return builtin_metric("euclidean")


@pytest.fixture(scope="session")
def sphere():
    return builtin_metric("sphere_stereographic", {"radius": 1})


@pytest.fixture(scope="session")
def generic_metric():
    # non-diagonal, not conformally flat
    return metric_from_mapping({
        "g11": "1 + 0.1*x2^2",
        "g12": "0.05*x3",
        "g22": "1 + 0.2*sin(x1)",
        "g23": "0.03*x1*x2",
        "g33": "exp(0.1*x3)",
    })


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
