"""Shared pytest configuration: acceptance-criterion bookkeeping.

Tests tagged ``@pytest.mark.criterion(number, title)`` are collected into a
per-criterion verdict table printed after the run, one PASS/FAIL line per
criterion, so the acceptance gate can be read at a glance.
"""

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, title): tags a test as one acceptance criterion",
    )
    config._criterion_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    relevant = report.when == "call" or (
        report.when == "setup" and report.outcome != "passed"
    )
    if not relevant:
        return
    number, title = marker.args
    store = item.session.config._criterion_outcomes
    # a fixture error must not be papered over by an earlier pass
    if number not in store or report.outcome != "passed":
        store[number] = (title, report.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_criterion_outcomes", None)
    if not store:
        return
    verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(store):
        title, outcome = store[number]
        terminalreporter.write_line(
            f"criterion {number:>2} {verdict.get(outcome, outcome.upper()):<4} {title}"
        )
