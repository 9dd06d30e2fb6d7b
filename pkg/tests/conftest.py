import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``criterion(n, label)`` returns a callable taking the boolean
    outcome and an optional note; it records the line and asserts.
    """
    def start(n, label):
        def finish(ok, note=""):
            line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {label}" + (f"  [{note}]" if note else "")
            ACCEPTANCE_LINES.append((n, line))
            print(line)
            assert ok, line
        return finish
    return start


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
