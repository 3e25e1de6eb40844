import pytest

from vrftctls.tf_algebra import RationalTF
from vrftctls.vrft_core import ControllerStructure


@pytest.fixture
def plant():
    return RationalTF.from_roots([0.8], [0.7, 0.9], 0.5)


@pytest.fixture
def ref_model():
    return RationalTF([0.16, 0.0], [1.0, -1.2, 0.36])


@pytest.fixture
def integrator():
    return RationalTF([1.0, 0.0], [1.0, -1.0])


@pytest.fixture
def noise_tf():
    return RationalTF([1.0, 0.0], [1.0, -0.3])


@pytest.fixture
def c0():
    return RationalTF.from_roots([0.7, 0.9], [0.8, 1.0], 0.3)


@pytest.fixture
def structure(integrator):
    return ControllerStructure(integrator, 3, 2)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
