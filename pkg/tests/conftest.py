import pytest

CRITERIA: dict[int, str] = {}


@pytest.fixture
def report():
    """Record a one-line verdict for an acceptance criterion."""
    def record(number: int, ok: bool, detail: str):
        CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(CRITERIA[number])
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
