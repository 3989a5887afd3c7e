import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record and print one 'AC<k> PASS/FAIL: detail' line."""

    def _report(key, passed, detail):
        line = f"{key} {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
