"""Shared test plumbing.

The acceptance tests append one human-readable pass/fail line per
criterion to CRITERION_LINES; they are echoed in the terminal summary so
the verdicts are visible even when pytest captures per-test stdout.
"""

CRITERION_LINES = []


def record_criterion(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    CRITERION_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)
