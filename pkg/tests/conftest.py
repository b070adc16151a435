import sys
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Context manager recording a PASS/FAIL line for an acceptance criterion."""

    @contextmanager
    def record(number: int, title: str):
        try:
            yield
        except BaseException as e:
            request.config.stash[_RESULTS].append((number, "FAIL", title, f"{type(e).__name__}: {e}".splitlines()[0]))
            raise
        request.config.stash[_RESULTS].append((number, "PASS", title, ""))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config.stash.get(_RESULTS, []))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, title, note in rows:
        line = f"criterion {number:2d}: {verdict}  {title}"
        terminalreporter.write_line(line + (f"  ({note})" if note else ""))
