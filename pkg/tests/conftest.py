"""Shared fixtures: the acceptance scoreboard.

Acceptance tests emit one verdict line each through the ``verdict``
fixture; the lines are replayed as a summary section at the end of the
run so they stay visible even with output capture enabled.
"""

from __future__ import annotations

import pytest


@pytest.fixture
def verdict(request):
    """Record a pass/fail line for the end-of-run scoreboard, then assert."""

    def emit(num: int, name: str, ok: bool, detail: str) -> None:
        line = f"[acceptance] {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines = getattr(request.config, "_acceptance_lines", None)
        if lines is None:
            lines = []
            request.config._acceptance_lines = lines
        lines.append(line)
        print(line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
