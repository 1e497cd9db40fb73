import json
import time

import numpy as np
import pytest

from iccopf.data import bundled
from iccopf.dcgrid import build_compact, load_scenario
from iccopf.inverse import InverseSettings, solve_inverse
from iccopf.surrogate import SecurityProfile

ACCEPTANCE = {}


def direction_profile(model, name):
    doc = json.loads(bundled(name).read_text())
    u = np.zeros(len(model.chance_rows))
    for key, w in doc["u"].items():
        u[model.row_index(key)] = w
    return SecurityProfile(u / np.linalg.norm(u), doc["beta0"])


class Scenario:
    """A bundled system with its direction and, lazily, its inverse result."""

    def __init__(self, name, direction):
        self.case, self.scenario = load_scenario(bundled(f"{name}_scenario.json"))
        self.model = build_compact(self.case, self.scenario)
        self.profile = direction_profile(self.model, direction)
        self._result = None
        self.elapsed = None

    @property
    def result(self):
        if self._result is None:
            start = time.perf_counter()
            self._result = solve_inverse(self.model, self.profile, InverseSettings())
            self.elapsed = time.perf_counter() - start
        return self._result


@pytest.fixture(scope="session")
def sys14():
    return Scenario("case14", "case14_direction.json")


@pytest.fixture(scope="session")
def sys39():
    return Scenario("case39", "case39_direction.json")


@pytest.fixture(scope="session")
def systems(sys14, sys39):
    return {"case14": sys14, "case39": sys39}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE, key=str):
        terminalreporter.write_line(ACCEPTANCE[n])
