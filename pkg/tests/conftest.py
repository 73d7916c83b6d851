import pytest

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number = marker.args[0]
    entry = _outcomes.setdefault(number, {"passed": True, "tests": []})
    if report.when == "call" or report.failed:
        entry["passed"] = entry["passed"] and not report.failed
        if report.when == "call":
            entry["tests"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        entry = _outcomes[number]
        status = "PASS" if entry["passed"] else "FAIL"
        count = len(entry["tests"])
        terminalreporter.write_line(f"criterion {number}: {status} ({count} test{'s' if count != 1 else ''})")
