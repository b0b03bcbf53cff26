import numpy as np
import pytest

from vcpcr.data import standardize

ACCEPTANCE_LINES = []


def standardized(n, p, rng, corr=0.0):
    """Random standardized n x p matrix; ``corr`` adds a shared factor."""
    X = rng.standard_normal((n, p)) + corr * rng.standard_normal((n, 1))
    return standardize(X).values


def orthonormal_standardized(n, k, rng):
    """k mean-zero columns with sample variance 1 and zero sample cross-correlation."""
    A = rng.standard_normal((n, k))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    # columns of Q are orthogonal to the ones vector because A was centered
    return Q * np.sqrt(n - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
