import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def matrices(min_dim=1, max_dim=5, scale=10.0):
    """Finite float64 matrices of random shape."""
    shapes = st.tuples(st.integers(min_dim, max_dim), st.integers(min_dim, max_dim))
    elems = st.floats(-scale, scale, allow_nan=False, allow_infinity=False, width=64)
    return shapes.flatmap(lambda s: hnp.arrays(np.float64, s, elements=elems))


def matrix_pairs(min_dim=1, max_dim=5, scale=10.0):
    shapes = st.tuples(st.integers(min_dim, max_dim), st.integers(min_dim, max_dim))
    elems = st.floats(-scale, scale, allow_nan=False, allow_infinity=False, width=64)
    return shapes.flatmap(lambda s: st.tuples(hnp.arrays(np.float64, s, elements=elems),
                                              hnp.arrays(np.float64, s, elements=elems)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
