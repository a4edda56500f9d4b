import numpy as np
import pytest

from gdmskit import systems

# independent high-precision oracle for 2^-s + 3^-s = 1 and its Bernoulli moments
DELTA_23 = 0.787884911025869783628555917298
CHI_23 = 0.863769896250437848033981842973
SIGMA2_23 = 0.0400694467535555036086626534029


@pytest.fixture(scope="session")
def sim23():
    return systems.similarity_system([0.5, 1 / 3])


@pytest.fixture(scope="session")
def lattice():
    return systems.lattice_system(0.5)


@pytest.fixture(scope="session")
def farey():
    return systems.farey_system()


@pytest.fixture(scope="session")
def mp_half():
    return systems.manneville_pomeau_system(0.5)


@pytest.fixture(scope="session")
def triangle():
    return systems.apollonian_triangle()


@pytest.fixture(scope="session")
def schottky():
    return systems.schottky_system()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
