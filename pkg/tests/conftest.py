import pytest

from corsynth.geometry import UnitCellGeometry
from corsynth.modal import build_system

UM = 1e-6
NM = 1e-9

# design points used across the suite
TFE2_OPT = UnitCellGeometry(W=1.1 * UM, t_AlN=1 * UM, t_Al=110 * NM, alpha=0.5, scheme="tfe2")
LFE_OPT = UnitCellGeometry(W=1.15 * UM, t_AlN=1 * UM, t_Al=120 * NM, alpha=0.35, scheme="lfe")
LFE_FAB = UnitCellGeometry(W=1.15 * UM, t_AlN=1 * UM, t_Al=85 * NM, alpha=0.57, scheme="lfe")
BARE_1UM = UnitCellGeometry(W=1 * UM, t_AlN=1 * UM)

_RESULTS = []


def record(line: str) -> None:
    _RESULTS.append(line)


@pytest.fixture(scope="session")
def bare_sys():
    return build_system(BARE_1UM)


@pytest.fixture(scope="session")
def tfe2_sys():
    return build_system(TFE2_OPT)


@pytest.fixture(scope="session")
def lfe_sys():
    return build_system(LFE_OPT)


@pytest.fixture(scope="session")
def small_tfe2_sys():
    return build_system(TFE2_OPT, nx=12, nz=12)


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
