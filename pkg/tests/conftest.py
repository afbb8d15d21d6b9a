import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion.

    Returns ``report(number, ok, message)``; the line is printed immediately
    and repeated in the terminal summary.
    """
    def report(number: int, ok: bool, message: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {message}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
