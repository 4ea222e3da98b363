import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = pytest.StashKey[list]()


@pytest.fixture
def record_criterion(request):
    """Record one ``ACCEPTANCE <n> PASS|FAIL ...`` line for the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
