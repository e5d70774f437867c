import json
from pathlib import Path

import pytest

from fdidse.config import validate_config
from fdidse.dynamics import simulate_smib
from fdidse.machine import GeneratorParams

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


@pytest.fixture(scope="session")
def params():
    return GeneratorParams()


@pytest.fixture(scope="session")
def default_cfg():
    return validate_config({})


@pytest.fixture(scope="session")
def truth(default_cfg):
    c = default_cfg
    return simulate_smib(c.generator, c.network, c.horizon, c.dt, c.n_sub)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[n])
