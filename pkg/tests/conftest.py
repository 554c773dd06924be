"""Collects the one-line verdicts printed by the acceptance suite."""

VERDICTS = []


def record_verdict(line):
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
