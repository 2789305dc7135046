from __future__ import annotations

import pytest

# criterion label -> PASS / FAIL / SKIP, filled by the `acceptance` marker
_ACCEPTANCE_STATUS: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.kwargs.get("criterion", item.name)
    if report.when == "setup" and report.skipped:
        _ACCEPTANCE_STATUS[label] = "SKIP"
    elif report.when == "call":
        if report.passed:
            _ACCEPTANCE_STATUS[label] = "PASS"
        elif report.skipped:
            _ACCEPTANCE_STATUS[label] = "SKIP"
        else:
            _ACCEPTANCE_STATUS[label] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_STATUS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label in sorted(_ACCEPTANCE_STATUS):
        terminalreporter.write_line(f"[{_ACCEPTANCE_STATUS[label]}] {label}")
