"""Shared pytest wiring.

The acceptance suite appends one PASS/FAIL line per check to
ACCEPTANCE_LINES; echoing them in the terminal summary keeps the whole
contract readable even under output capture.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
