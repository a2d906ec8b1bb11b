import time

import pytest

_RESULTS = pytest.StashKey[list]()
_START = pytest.StashKey[float]()


def pytest_sessionstart(session):
    session.config.stash[_START] = time.perf_counter()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the summary prints them after the run."""
    lines = request.config.stash.setdefault(_RESULTS, [])

    def record(n, ok, detail):
        lines.append((n, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    wall = time.perf_counter() - config.stash[_START]
    terminalreporter.write_line(f"suite wall-clock: {'PASS' if wall < 120 else 'FAIL'}  "
                                f"{wall:.1f} s (limit 120 s)")
