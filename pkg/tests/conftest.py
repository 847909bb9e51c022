import math

import numpy as np
import pytest

from kraichnan_sqg.noise import counter_rng
from kraichnan_sqg.spectral import Grid


@pytest.fixture
def grid():
    return Grid(32, 2 * math.pi)


@pytest.fixture
def rng():
    return counter_rng(1234, 0, 9)


def single_mode(grid, m, amp=1.0, phase="cos"):
    X, Y = grid.coordinates()
    k = grid.dk * np.asarray(m, dtype=float)
    arg = k[0] * X + k[1] * Y
    return amp * (np.cos(arg) if phase == "cos" else np.sin(arg)), k


# acceptance reporting: one line per criterion in the terminal summary
_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record the measured detail of an acceptance criterion."""

    def record(label, detail):
        _ACCEPTANCE[request.node.nodeid] = [label, detail, None]

    return record


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry = _ACCEPTANCE.setdefault(report.nodeid, [report.nodeid.split("::")[-1], "", None])
        entry[2] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE, key=lambda n: _criterion_number(n)):
        label, detail, outcome = _ACCEPTANCE[nodeid]
        terminalreporter.write_line(f"{outcome or 'SKIP'}  {label}: {detail}")


def _criterion_number(nodeid):
    name = nodeid.split("::")[-1]
    digits = "".join(c for c in name.split("_")[1] if c.isdigit()) if "_" in name else ""
    return int(digits) if digits else 99
