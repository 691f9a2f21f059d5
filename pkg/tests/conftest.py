import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or hasattr(report, "wasxfail")
    if report.when == "call" or failed or report.skipped:
        prev = _results.get(number)
        if prev is None or prev[1] == "PASS":
            if hasattr(report, "wasxfail"):
                status = "FAIL (known, see README)"
            elif report.skipped:
                status = "SKIP"
            elif report.failed:
                status = "FAIL"
            else:
                status = "PASS"
            _results[number] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, status, seconds = _results[number]
        terminalreporter.write_line(f"criterion {number}: {status:<24} {title} ({seconds:.1f} s)")
