import os

import pytest

ACCEPTANCE_LINES = []


class _Recorder:
    """Collects one pass/fail line per acceptance criterion."""

    def line(self, text: str) -> None:
        ACCEPTANCE_LINES.append(text)
        print(text, flush=True)


@pytest.fixture(scope="session")
def acceptance() -> _Recorder:
    return _Recorder()


@pytest.fixture(scope="session")
def n_jobs() -> int:
    return max(1, os.cpu_count() or 1)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
