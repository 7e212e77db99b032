import numpy as np
import pytest

from rotpend.model import Forcing, PendulumParams

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def unit_double():
    return PendulumParams((1.0, 1.0), (1.0, 1.0), 1.0)


@pytest.fixture(scope="session")
def tuned_double():
    return PendulumParams((10.0, 1.0), (0.1, 10.0), 1.0)


@pytest.fixture(scope="session")
def small_forcing():
    return Forcing.single(2, 1.0, 0, 1, 0.0, 0.1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
