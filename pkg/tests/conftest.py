"""Shared pytest plumbing for the acceptance suite.

Acceptance tests record one ``CRITERION k [PASS|FAIL]`` line each via
``record_criterion``; they are replayed in the terminal summary so they
survive pytest's output capture.
"""

criterion_lines: list[str] = []


def record_criterion(line: str) -> None:
    criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if not criterion_lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in criterion_lines:
        terminalreporter.write_line(line)
