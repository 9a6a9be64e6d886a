import pytest

_LINES = []


class CriterionLog:
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(self, number, title, passed, detail=""):
        _LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} :: {detail}")
        print(_LINES[-1])
        return passed

    def info(self, title, detail):
        _LINES.append(f"[INFO] {title} :: {detail}")
        print(_LINES[-1])


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
