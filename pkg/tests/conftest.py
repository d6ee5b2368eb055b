"""Shared fixtures and the acceptance summary reporter.

Every test in test_acceptance.py represents one numbered acceptance
criterion; the terminal summary prints one PASS/FAIL line per criterion so
the gate can be read off directly from the pytest output.
"""

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


_acceptance_reports = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        name = report.nodeid.split("::")[-1]
        _acceptance_reports[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_reports:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_acceptance_reports):
        outcome = _acceptance_reports[name]
        label = {"passed": "PASS", "failed": "FAIL",
                 "skipped": "SKIP"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{label}  {name}")
