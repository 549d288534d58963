import pytest

_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}
_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None or (report.when != "call" and report.passed):
        return
    status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
    n, title = crit
    old = _results.get(n, (title, "PASS"))[1]
    _results[n] = (title, max(old, status, key=_RANK.get))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        title, status = _results[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")
