"""Shared fixtures and the acceptance summary printer.

Tests marked ``@pytest.mark.criterion("<id>")`` are grouped by id and
reported as one PASS/FAIL line each at the end of the session. A test can
attach a short result string with ``record_property("detail", text)``.
"""

from __future__ import annotations

import sys
from collections import OrderedDict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: "OrderedDict[str, list]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion the test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    _RESULTS.setdefault(str(marker.args[0]), []).append((item.name, report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c)):
        cases = _RESULTS[cid]
        ok = all(passed for _, passed, _ in cases)
        details = "; ".join(
            f"{'' if passed else '[failed] '}{detail or name}" for name, passed, detail in cases
        )
        tr.write_line(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {details}")
