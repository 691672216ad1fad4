import numpy as np
import pytest

from terrasim.core import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cloud(rng, n, labels=True, scale=50.0):
    xyz = rng.uniform(0, scale, size=(n, 3))
    rgb = rng.integers(0, 256, size=(n, 3))
    lab = rng.integers(0, 3, size=n) if labels else None
    return PointCloud(xyz, rgb, lab)


# one summary line per acceptance criterion
_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    import test_acceptance

    terminalreporter.section("acceptance criteria")
    for name, title in test_acceptance.CRITERIA:
        outcome = _ACCEPTANCE.get(name)
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, "NOT RUN")
        terminalreporter.write_line(f"{status:7s} {title}")
