import pytest

_ACCEPTANCE = {}


class AcceptanceRecorder:
    """Collects one verdict per acceptance criterion for the end-of-run summary."""

    def record(self, number, ok, detail, elapsed, limit):
        in_time = elapsed < limit
        _ACCEPTANCE[number] = (ok and in_time, f"{detail}; {elapsed:.1f} s (limit {limit:.0f} s)")
        return ok and in_time


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
