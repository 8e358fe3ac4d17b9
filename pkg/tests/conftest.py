import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cardiomix.imgcore import SyntheticSpec, generate_synthetic

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_synthetic():
    """20 + 20 images of 24x24 with easy lesions."""
    spec = SyntheticSpec(per_class=20, height=24, width=24, radius_min=3, radius_max=5,
                         contrast=0.7, noise=0.1, background=0.1, seed=3)
    return generate_synthetic(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
