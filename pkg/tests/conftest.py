"""Prints one pass/fail line per acceptance criterion at the end of the run."""

from __future__ import annotations

import pytest

# criterion number -> (title, outcomes, measured values)
CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion a test belongs to")


def record(n: int, **values) -> None:
    """Attach measured values to criterion ``n`` for the summary."""
    CRITERIA.setdefault(n, {"title": "", "outcomes": [], "values": {}})["values"].update(values)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        n, title = marker.args
        entry = CRITERIA.setdefault(n, {"title": "", "outcomes": [], "values": {}})
        entry["title"] = title
        entry["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        entry = CRITERIA[n]
        outs = entry["outcomes"]
        if not outs:
            continue
        status = "PASS" if all(o == "passed" for o in outs) else "FAIL"
        values = ", ".join(f"{k}={_fmt(v)}" for k, v in entry["values"].items())
        tr.write_line(f"criterion {n:2d} {status}: {entry['title']}" + (f" [{values}]" if values else ""))


def _fmt(v) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)
