import numpy as np
import pytest

from manyscat.emcore import PlaneWave
from manyscat.ensemble import Box, DensityField


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def wave():
    return PlaneWave.projected(1.0, (0.0, 0.0, 1.0), (1.0, 0.0, 0.0))


@pytest.fixture
def oblique_wave():
    return PlaneWave.projected(3.0, (0.3, 0.2, 1.0), (1.0, 0.5j, 0.0))


@pytest.fixture
def unit_box():
    return Box.cube(1.0)


@pytest.fixture
def dilute(unit_box):
    return DensityField.uniform(1e-3, unit_box)


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "values": {}})
    if rep.failed:
        entry["passed"] = False
    if rep.when == "call":
        entry["values"].update(dict(item.user_properties))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        vals = ", ".join(f"{k}={v}" for k, v in e["values"].items())
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}  {status}  {e['title']}  {vals}")
