"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

import pytest

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of the calling acceptance test under its label."""
    marker = request.node.get_closest_marker("acceptance")
    label = marker.args[0] if marker else request.node.name
    ACCEPTANCE[label] = "FAIL"
    details = []
    yield details
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    ACCEPTANCE[label] = ("PASS" if ok else "FAIL") + (f"  ({'; '.join(details)})" if details else "")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
        terminalreporter.write_line(f"{label:<40} {ACCEPTANCE[label]}")
