"""Shared pytest plumbing: surface the acceptance criterion results.

The acceptance tests report one pass/fail line per release criterion; fd-level
output capture would otherwise hide them on success, so they are collected
here and echoed in the terminal summary.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
