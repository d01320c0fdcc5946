import pytest

_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion: criterion("AC1", ok, detail)."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA[name] = (bool(ok), detail)
        print(f"{name}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: (len(s), s)):
        ok, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} {detail}")
