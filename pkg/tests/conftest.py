import numpy as np
import pytest

from rqso.dynamics import OperatorEnsemble
from rqso.volterra import VolterraOperator


def random_skew(rng, m, extremal=False):
    """Random skew-symmetric matrix with entries in [-1, 1] (or +-1)."""
    if extremal:
        U = rng.choice([-1.0, 1.0], size=(m, m))
    else:
        U = rng.uniform(-1.0, 1.0, size=(m, m))
    U = np.triu(U, 1)
    return U - U.T


def random_operator(rng, m, extremal=False):
    return VolterraOperator(random_skew(rng, m, extremal))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def squaring3():
    return OperatorEnsemble.squaring(3)


@pytest.fixture(scope="session")
def squaring2():
    return OperatorEnsemble.squaring(2)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
