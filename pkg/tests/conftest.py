import os
from pathlib import Path

import pytest

from reap.nn.mnist import ENV_VAR, FILES


def mnist_dir() -> Path | None:
    d = os.environ.get(ENV_VAR)
    if d and all((Path(d) / f).is_file() for f in FILES.values()):
        return Path(d)
    return None


@pytest.fixture(scope="session")
def mnist_path():
    d = mnist_dir()
    if d is None:
        pytest.skip(f"MNIST IDX files not available (set ${ENV_VAR})")
    return d


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
