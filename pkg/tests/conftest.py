import numpy as np
import pytest

from tikhmix.circular import TikhonovMixture


def random_mixture(rng, order, kmin=0.5, kmax=50.0, log_kappa=False):
    w = rng.dirichlet(np.ones(order))
    if log_kappa:
        k = np.exp(rng.uniform(np.log(kmin), np.log(kmax), order))
    else:
        k = rng.uniform(kmin, kmax, order)
    mu = rng.uniform(0, 2 * np.pi, order)
    return TikhonovMixture.from_weights(w, k * np.exp(1j * mu))


def random_tikhonov(rng, kmin=0.5, kmax=50.0):
    return complex(rng.uniform(kmin, kmax) * np.exp(1j * rng.uniform(0, 2 * np.pi)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# pass/fail lines from test_acceptance.py, echoed after the run so capture does not hide them
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
