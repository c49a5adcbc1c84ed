import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from phenovb.data_io import load_faithful

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def faithful():
    return load_faithful()


def two_blobs(seed=0, n=200, sep=10.0):
    """Two unit-variance 2-D blobs whose centres are ``sep`` sigma apart."""
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [sep, 0.0]])
    x = np.vstack([rng.normal(centres[0], 1.0, (n, 2)), rng.normal(centres[1], 1.0, (n, 2))])
    truth = np.repeat([0, 1], n)
    return x, truth, centres


@pytest.fixture
def blobs():
    return two_blobs()


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
