import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# one line per acceptance criterion, filled in by tests/test_acceptance.py
CRITERIA_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[k])
