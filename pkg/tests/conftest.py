import numpy as np
import pytest

from pai.core import AffineLayer, WeightedPointSet, ZonotopeSource

EXAMPLE_X = [0.1, 0.4, 0.5, 0.8, 1.5, 2.1, 3.0, 3.1, 3.5, 4.6, 5.9, 6.0, 6.4]
EXAMPLE_P = [0.072, 0.076, 0.08, 0.073, 0.036, 0.014, 0.02, 0.012, 0.016, 0.02, 0.022, 0.03,
           0.024]
EXP_NEG_D2_SIGMA = 2 ** -0.5  # exp(-d^2) in the exp(-d^2 / (2 sigma^2)) parameterization


@pytest.fixture
def example_points():
    return WeightedPointSet(np.array(EXAMPLE_X)[:, None], EXAMPLE_P)


@pytest.fixture
def shear():
    return AffineLayer([[2.0, -1.0], [0.0, 1.0]], [0.0, 0.0])


@pytest.fixture
def zonotope():
    return ZonotopeSource([1.0, 2.0], [[0.5, 0.5], [0.5, 0.0], [0.0, 0.5]])


@pytest.fixture
def two_blobs():
    rng = np.random.default_rng(11)
    a = rng.normal([0.0, 0.0], 0.05, size=(200, 2))
    b = rng.normal([5.0, 5.0], 0.05, size=(200, 2))
    pts = np.vstack([a, b])
    return WeightedPointSet(pts, np.full(400, 1 / 400))


# --- acceptance summary -----------------------------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        n, text = marker.args
        entry = _criteria.setdefault(n, {"text": text, "ok": True, "failed": []})
        if rep.failed:
            entry["ok"] = False
            entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        entry = _criteria[n]
        status = "PASS" if entry["ok"] else "FAIL"
        line = f"[{status}] criterion {n}: {entry['text']}"
        if entry["failed"]:
            line += f"  (failing: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
