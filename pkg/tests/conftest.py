import pytest


class AcceptanceLog:
    def __init__(self):
        self.lines = []

    def record(self, number, passed, detail):
        mark = "PASS" if passed else "FAIL"
        self.lines.append(f"ACCEPTANCE {number:>2} [{mark}] {detail}")


_LOG = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance_log():
    return _LOG


def pytest_terminal_summary(terminalreporter):
    if _LOG.lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LOG.lines):
            terminalreporter.write_line(line)
