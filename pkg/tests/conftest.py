import numpy as np
import pytest

from mmfl.learner import Examples, ModelWeights


def random_weights(rng, dim, classes, scale=1.0):
    return ModelWeights(rng.normal(0, scale, (classes, dim)), rng.normal(0, scale, classes))


def random_examples(rng, n, dim, classes):
    return Examples(rng.normal(size=(n, dim)), rng.integers(0, classes, size=n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    mark = _CRITERIA.get(report.nodeid)
    if mark is None:
        return
    number, title = mark
    status = "PASS" if report.outcome == "passed" else "FAIL"
    _RESULTS[number] = (status, title, getattr(report, "duration", 0.0))


_CRITERIA = {}
_RESULTS = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, duration = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}  ({duration:.1f}s)")
