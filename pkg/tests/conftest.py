import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line for the terminal summary, then fail the test if needed."""

    def record(number: int, title: str, ok: bool, detail: str, seconds: float) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail} | {seconds:.1f}s"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
