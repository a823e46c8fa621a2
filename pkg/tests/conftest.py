import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("msgp", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("msgp")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_product_kernel(X, tau, fn):
    """Brute-force ``prod_k fn(|x_ik - x_jk|, tau_k)`` over all pairs."""
    n, p = X.shape
    R = np.ones((n, n))
    for k in range(p):
        D = np.abs(X[:, k][:, None] - X[:, k][None, :])
        R *= fn(D, tau[k])
    return R


def bohman_ref(t, tau):
    u = np.minimum(np.asarray(t, dtype=float) / tau, 1.0)
    return np.where(u < 1.0, (1 - u) * np.cos(np.pi * u) + np.sin(np.pi * u) / np.pi, 0.0)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
