"""Shared pytest wiring: per-criterion summary for acceptance tests."""
import pytest

_ACCEPTANCE_RESULTS: list[tuple[str, str, float]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0] if marker.args else item.name
    if report.passed:
        status = "PASS"
    elif report.skipped:
        status = "SKIP"
    else:
        status = "FAIL"
    _ACCEPTANCE_RESULTS.append((status, label, report.duration))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for status, label, duration in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status}  {label}  [{duration:.2f}s]")
