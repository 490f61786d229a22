"""Shared pytest hooks: one PASS/FAIL line per acceptance criterion."""

import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.fixture
def notes(request):
    """List of strings shown next to the criterion in the terminal summary."""
    request.node.criterion_notes = []
    return request.node.criterion_notes


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    entry = _OUTCOMES.setdefault(number, {"title": title, "passed": True, "notes": []})
    if not report.passed:
        entry["passed"] = False
    if report.when == "call":
        entry["notes"].extend(getattr(item, "criterion_notes", []))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        entry = _OUTCOMES[number]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}")
        for note in entry["notes"]:
            terminalreporter.write_line(f"                 {note}")
