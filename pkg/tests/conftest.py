import pytest

from hanle_sp import IntegratorSettings

# filled by tests/test_acceptance.py, printed after the run
CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def tight():
    return IntegratorSettings(rel_tol=1e-8, abs_tol=1e-11)
