_CRITERION_LINES = []


def pytest_runtest_logreport(report):
    # one pass/fail line per acceptance criterion, printed at session end
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        _CRITERION_LINES.append(f"{name}: {verdict}")


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)
