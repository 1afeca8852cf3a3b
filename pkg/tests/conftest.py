import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlphase import kernel as K
from nlphase import potential as P

settings.register_profile(
    "nlphase",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("nlphase")


@pytest.fixture(scope="session")
def gauss1():
    return K.gaussian(1)


@pytest.fixture(scope="session")
def gauss2():
    return K.gaussian(2)


@pytest.fixture(scope="session")
def frac1():
    return K.fractional(1, eta=0.25)


@pytest.fixture(scope="session")
def quartic():
    return P.quartic_1d(-1.0, 1.0, 0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion for the terminal summary."""
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
