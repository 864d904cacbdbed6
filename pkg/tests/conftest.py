import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)")
_lines = {}


@pytest.fixture
def detail(record_property):
    """Attach a short measurement summary to the acceptance line of this test."""
    def note(text):
        record_property("detail", text)
    return note


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    num = int(m.group(1))
    info = "; ".join(v for k, v in report.user_properties if k == "detail")
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            status = "SKIP"
        else:
            status = "PASS" if report.passed else "FAIL"
        _lines[num] = f"criterion {num:2d}: {status}  {info}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not _lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_lines):
        terminalreporter.write_line(_lines[num])
