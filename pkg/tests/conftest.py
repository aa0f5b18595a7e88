import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

from qfflow import blaschke, qdiff
from qfflow.fuchsian import build_octagon_group


@pytest.fixture(scope="session")
def group():
    return build_octagon_group()


@pytest.fixture(scope="session")
def mesh2(group):
    return blaschke.build_mesh(group, 2)


@pytest.fixture(scope="session")
def mesh3(group):
    return blaschke.build_mesh(group, 3)


@pytest.fixture(scope="session")
def A03():
    """Projected seed (1, 0.3, 0.1i) at t = 0.3."""
    return qdiff.project(qdiff.QuadraticDifferential((1.0, 0.3, 0.1j), 6, 0.3))


@pytest.fixture(scope="session")
def A0(A03):
    return A03.scaled(0.0)


@pytest.fixture(scope="session")
def family3(mesh3, A03):
    return blaschke.MetricFamily(mesh3, A03)


@pytest.fixture(scope="session")
def B03(family3):
    return family3.metric(0.3)


@pytest.fixture(scope="session")
def B0(family3):
    return family3.metric(0.0)


@pytest.fixture(scope="session")
def family2(mesh2, A03):
    return blaschke.MetricFamily(mesh2, A03)


@pytest.fixture(scope="session")
def B2(family2):
    return family2.metric(0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
