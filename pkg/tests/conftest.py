import time

import pytest

_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    start = time.perf_counter()

    def record(label: str, ok: bool, detail: str, budget: float | None = None):
        elapsed = time.perf_counter() - start
        if budget is not None and elapsed >= budget:
            ok, detail = False, f"{detail}; over budget ({elapsed:.1f}s >= {budget:.0f}s)"
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail} [{elapsed:.1f}s]"
        request.config.stash.setdefault(_VERDICTS, []).append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
