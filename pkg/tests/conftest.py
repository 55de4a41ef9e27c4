"""Shared pytest hooks: print the acceptance-gate verdict lines after the
normal test summary so they are visible even when every test passes."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS:
        terminalreporter.write_line(line)
