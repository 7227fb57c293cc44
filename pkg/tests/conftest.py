"""Per-criterion PASS/FAIL reporting for tests marked ``acceptance(n, title)``."""

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion number and title")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark:
            n, title = mark.args
            _results.setdefault(n, {"title": title, "status": None, "detail": ""})
            item.user_properties.append(("acceptance", n))


def pytest_runtest_logreport(report):
    n = dict(report.user_properties).get("acceptance")
    if n is None:
        return
    entry = _results[n]
    if report.when == "call" or report.outcome != "passed":
        if report.skipped:
            status = "SKIP"
            entry["detail"] = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
        elif report.failed:
            status = "FAIL"
        else:
            status = "PASS"
        # a criterion fails if any of its tests fails
        if entry["status"] != "FAIL":
            entry["status"] = status


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        e = _results[n]
        line = f"AC{n} {e['status'] or 'NOT RUN':4s} {e['title']}"
        if e["status"] == "SKIP" and e["detail"]:
            line += f" ({e['detail'].removeprefix('Skipped: ')})"
        terminalreporter.write_line(line)


@pytest.fixture
def elapsed():
    """Context-free stopwatch: ``with elapsed() as t: ...; t.seconds``."""
    import time
    from contextlib import contextmanager

    class Timer:
        seconds = 0.0

    @contextmanager
    def run():
        t = Timer()
        start = time.perf_counter()
        yield t
        t.seconds = time.perf_counter() - start

    return run
