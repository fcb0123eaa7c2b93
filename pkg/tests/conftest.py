"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        measured = dict(item.user_properties).get("measured", "")
        prev = _OUTCOMES.get(number)
        ok = not failed and report.passed if report.when == "call" else False
        if prev is not None and not prev[1]:
            return
        _OUTCOMES[number] = (title, ok, measured)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, ok, measured = _OUTCOMES[number]
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}"
        if measured:
            line += f" [{measured}]"
        terminalreporter.write_line(line)
