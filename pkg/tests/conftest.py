from __future__ import annotations

import pytest
import torch

torch.set_num_threads(1)

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "seen": False, "notes": []})
    if rep.when == "call" or rep.failed:
        entry["seen"] = True
        if rep.failed:
            entry["passed"] = False
            entry["notes"].append(item.name)
        elif rep.skipped:
            entry["passed"] = False
            entry["notes"].append(f"{item.name} skipped")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["passed"] and e["seen"] else "FAIL"
        extra = f"  ({', '.join(e['notes'])})" if e["notes"] else ""
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {e['title']}{extra}")
