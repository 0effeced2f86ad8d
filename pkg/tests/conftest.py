"""Shared pytest config: prints one PASS/FAIL line per acceptance criterion."""

import re

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match or report.when != "call":
        return
    num = int(match.group(1))
    desc = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    # Keep the worst outcome if a criterion spans several test functions.
    if _ACCEPTANCE.get(num, ("PASS",))[0] != "FAIL":
        _ACCEPTANCE[num] = (outcome, desc)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        outcome, desc = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {outcome}  ({desc})")
