import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = []
_ELAPSED = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # fixture setup time (e.g. building a corpus) counts toward the criterion
    _ELAPSED[item.nodeid] = _ELAPSED.get(item.nodeid, 0.0) + report.duration
    if report.when == "call" or (report.when == "setup" and not report.passed):
        n, text = marker.args
        _CRITERIA.append((n, text, "PASS" if report.passed else "FAIL", _ELAPSED[item.nodeid]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, text, status, dur in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {text}  ({dur:.2f} s)")
