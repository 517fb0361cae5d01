import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per criterion and assert the outcome."""

    def record(number, description, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"{status} criterion {number}: {description} | {detail} | {elapsed:.1f}s (limit {limit:g}s)")
        print(ACCEPTANCE_LINES[-1])
        assert ok, ACCEPTANCE_LINES[-1]

    return record
