from __future__ import annotations

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict, then assert it."""

    def record(criterion: int, passed: bool | None, detail: str) -> None:
        """``passed=None`` marks a criterion skipped for missing inputs."""
        word = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"criterion {criterion:>2}: {word}  {detail}")
        if passed is None:
            pytest.skip(detail)
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
