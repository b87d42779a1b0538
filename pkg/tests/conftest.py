import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from subfit import models  # noqa: E402

_ACCEPTANCE = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, name, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE.append(f"[{status}] criterion {number}: {name}  {detail}".rstrip())
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def tetra():
    return models.tetrahedron()


@pytest.fixture
def cube():
    return models.cube()


@pytest.fixture(scope="session")
def lumpy_small():
    return models.lumpy_sphere(level=3)
