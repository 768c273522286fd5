import sys

import numpy as np
import pytest

from gfmcert.scenario import parse_scenario

CASES = ("three_bus_no_cond", "three_bus_cond_l1", "three_bus_cond_dyn")


@pytest.fixture(scope="session")
def scenarios():
    return {name: parse_scenario(name) for name in CASES + ("nine_bus",)}


@pytest.fixture(scope="session")
def dyn(scenarios):
    return scenarios["three_bus_cond_dyn"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
