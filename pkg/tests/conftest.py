import time

import numpy as np
import pytest

from mfuq.oxygen.testbed import OxygenTestbed
from mfuq.stats import RngStream

FIXTURE_SIZE = 200
FIXTURE_SEED = 7


class OxygenFixture:
    """Seeded pool of oxygen samples with descriptors, FOM fields and QoIs."""

    def __init__(self, n=FIXTURE_SIZE, seed=FIXTURE_SEED, grid_n=40):
        start = time.perf_counter()
        self.testbed = tb = OxygenTestbed(grid_n=grid_n)
        root = RngStream(seed, "fixture")
        self.samples = [tb.sample(root.child(str(i)), i) for i in range(n)]
        feats = [tb.features(mu) for mu in self.samples]
        outputs = [tb.solve(mu) for mu in self.samples]
        self.physical = np.array([mu.physical for mu in self.samples])
        self.d = np.array([f[0] for f in feats])
        self.eta = np.array([f[1] for f in feats])
        self.fields = np.array([o.values for o in outputs])
        self.qois = np.array([tb.qoi(o) for o in outputs])
        self.grid = tb.grid
        self.ranges = tb.ranges
        self.build_seconds = time.perf_counter() - start

    def subset(self, idx):
        return self.physical[idx], self.d[idx], self.eta[idx], self.fields[idx]


@pytest.fixture(scope="session")
def oxygen_fixture():
    return OxygenFixture()


# -- acceptance reporting -------------------------------------------------------------


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    if rep.when == "call" or number not in item.config.acceptance_lines:
        detail = dict(item.user_properties).get("detail", "")
        status = "PASS" if rep.passed else "FAIL"
        line = f"{status} criterion {number:>2}: {title}" + (f" [{detail}]" if detail else "")
        item.config.acceptance_lines[number] = line
        reporter = item.config.pluginmanager.get_plugin("terminalreporter")
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.acceptance_lines
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
