import pytest

_RESULTS = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(criterion, passed, detail)``."""

    def _record(criterion: str, passed: bool, detail: str) -> bool:
        _RESULTS.append((criterion, bool(passed), detail))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
