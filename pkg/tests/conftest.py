"""Shared test configuration.

The acceptance module registers one verdict per criterion; the terminal
summary hook prints them as a compact pass/fail table at the end of the
run so the verdicts are visible even when test output is captured.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERION_RESULTS = {}


def record_criterion(number, description, passed):
    CRITERION_RESULTS[number] = (description, bool(passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERION_RESULTS):
        description, passed = CRITERION_RESULTS[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {description}")
