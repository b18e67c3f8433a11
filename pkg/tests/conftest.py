from __future__ import annotations

import pytest

# lines recorded by the acceptance suite, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def record(number: int, passed: bool, detail: str, informational: bool = False) -> None:
        verdict = "PASS" if passed else "FAIL"
        tag = " (informational)" if informational else ""
        line = f"criterion {number:2d}: {verdict}{tag}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
