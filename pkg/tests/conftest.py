import pytest

_VERDICTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def verdict():
    """Record and assert one acceptance criterion; the line is printed at the end of the run."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        _VERDICTS.append((number, title, ok, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
