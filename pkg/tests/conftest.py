import numpy as np
import pytest

from emweak import sigma_analyze

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sigma1():
    return sigma_analyze([[1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def record_criterion(number, title, passed, detail=""):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}"
    if detail:
        line += f" :: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
