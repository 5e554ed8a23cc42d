"""Shared pytest hooks.

The acceptance tests record one verdict line each; printing them from a
terminal-summary hook keeps them visible under default output capture.
"""

ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
