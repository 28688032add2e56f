import math

import pytest

from bilipcert import CircleAction, CircleHomeoPL, CircleSample, GeneratorSet, RegularizedMetric, build_weight_table
from bilipcert.cli import DYADIC_ANGLE


def singular_generators(n_breakpoints=4096):
    return [CircleHomeoPL.rotation(math.sqrt(2) - 1), CircleHomeoPL.power_map(2.0, n_breakpoints)]


@pytest.fixture(scope="session")
def singular_metric():
    wt = build_weight_table(GeneratorSet(2), 1.2, 8)
    return RegularizedMetric(wt, CircleSample.uniform(200), CircleAction(singular_generators()))


@pytest.fixture(scope="session")
def rotation_action():
    return CircleAction([CircleHomeoPL.rotation(DYADIC_ANGLE)])


@pytest.fixture(scope="session")
def rotation_metric(rotation_action):
    wt = build_weight_table(GeneratorSet(1), 0.7, 12)
    return RegularizedMetric(wt, CircleSample.uniform(256), rotation_action)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
