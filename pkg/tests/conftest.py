"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary."""

from collections import OrderedDict

import pytest

from tan2theta.instance_lab import sharpness_2x2

_OUTCOMES: "OrderedDict[int, dict]" = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _OUTCOMES.setdefault(number, {"title": title, "ok": True, "seen": False})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        if report.failed:
            entry["ok"] = False
    if report.skipped and report.when == "setup":
        entry["seen"] = True
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        entry = _OUTCOMES[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}")


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Compile the numba kernels once so that timed sections measure steady state."""
    sharpness_2x2(-1.0, 1.0, 1.0)
