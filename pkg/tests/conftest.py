"""Shared fixtures and the acceptance-line reporter.

Acceptance tests push one "PASS"/"FAIL" line per criterion into
ACCEPTANCE_LINES; the terminal-summary hook prints them after the run so the
lines survive pytest's output capture.
"""

ACCEPTANCE_LINES = []


def record_criterion(number, ok, label):
    line = "criterion %2d %s  %s" % (number, "PASS" if ok else "FAIL", label)
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
