import numpy as np
import pytest


def random_boxes(rng, n, width, height, min_side=1.0, max_frac=0.7, margin=4.0):
    """Continuous boxes that may stick out of the raster by ``margin``."""
    x1 = rng.uniform(-margin, width, n)
    y1 = rng.uniform(-margin, height, n)
    w = rng.uniform(min_side, max(min_side + 1, width * max_frac), n)
    h = rng.uniform(min_side, max(min_side + 1, height * max_frac), n)
    return np.stack([x1, y1, x1 + w, y1 + h], axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_halves():
    """16x16 image: black left half, white right half."""
    img = np.zeros((16, 16, 3))
    img[:, 8:] = 1.0
    return img


# ---------------------------------------------------------------- acceptance summary

_VERDICTS = {}  # title -> (passed, detail lines), in run order


@pytest.fixture
def details(request):
    """Lines printed under the criterion's pass/fail line."""
    lines = []
    request.node.criterion_details = lines
    return lines


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    title = marker.args[0]
    passed = rep.passed and _VERDICTS.get(title, (True,))[0]
    _VERDICTS[title] = (passed, getattr(item, "criterion_details", []))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for title, (passed, lines) in _VERDICTS.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {title}")
        for line in lines:
            terminalreporter.write_line(f"      {line}")
