"""Collects acceptance verdicts and prints one line per criterion at the end of the run."""
import pytest

_VERDICTS = {}


@pytest.fixture
def criterion():
    """``criterion(key, ok, detail)`` records a verdict, prints it, and returns ``ok``."""

    def record(key, ok, detail):
        ok = bool(ok)
        _VERDICTS[key] = (ok, detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}")
        return ok

    return record


def _sort_key(key):
    head, _, tail = key.partition(".")
    return (int(head), tail) if head.isdigit() else (10**9, key)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS, key=_sort_key):
        ok, detail = _VERDICTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}")
