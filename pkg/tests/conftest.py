import sys
import numpy as np
import pytest

from muchapro.directions import shipped_directions


def random_hermitian(rng, D, psd=False):
    X = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    if psd:
        return X @ X.conj().T
    return X + X.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def dirs2():
    return shipped_directions(2, "hermitian")


@pytest.fixture(scope="session")
def dirs3():
    return shipped_directions(3, "hermitian")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
