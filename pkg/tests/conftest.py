import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pretextprobe.data import Dataset

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_images(rng, n=5, c=3, h=6, w=6) -> np.ndarray:
    return rng.random((n, c, h, w)).astype(np.float32)


def separable_toy(n_per_class=20, seed=0) -> Dataset:
    """Two classes of 1x1x2 'images'; class = which pixel is brighter."""
    r = np.random.default_rng(seed)
    a = r.uniform(0.6, 1.0, size=(n_per_class, 1))
    b = r.uniform(0.0, 0.4, size=(n_per_class, 1))
    x0 = np.concatenate([a, b], axis=1)
    x1 = np.concatenate([b, a], axis=1)
    images = np.concatenate([x0, x1]).reshape(-1, 1, 1, 2).astype(np.float32)
    labels = np.repeat([0, 1], n_per_class)
    return Dataset(images, labels, 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
