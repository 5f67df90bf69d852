import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    number, title = props["criterion"]
    failed = report.outcome == "failed"
    if report.when == "call" or failed:
        previous = _criteria.get(number, (title, "PASS"))[1]
        _criteria[number] = (title, "FAIL" if failed or previous == "FAIL" else "PASS")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2} {outcome}: {title}")
