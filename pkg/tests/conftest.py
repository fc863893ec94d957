import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from homstokes import CellGrid, build_coefficient, compute_correctors  # noqa: E402


@pytest.fixture(scope="session")
def laminate():
    return build_coefficient("laminate", (2.0, 1.0))


@pytest.fixture(scope="session")
def laminate_correctors_64(laminate):
    return compute_correctors(laminate, CellGrid(64), 1e-10, with_adjoint=False)


CRITERIA = {}


@pytest.fixture
def criterion():
    """Record a pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail=""):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        CRITERIA.setdefault(number, []).append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        for line in CRITERIA[number]:
            terminalreporter.write_line(line)
