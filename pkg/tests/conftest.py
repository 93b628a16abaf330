import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bifivfp.grid import Grid, ModelParams
from bifivfp.simulate import make_problem

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid1():
    return Grid(dim=1, n_x=32, n_v=24)


@pytest.fixture(scope="session")
def grid2():
    return Grid(dim=2, n_x=8, n_v=12)


@pytest.fixture(scope="session")
def volcano():
    return make_problem(ModelParams(), Grid(n_x=32, n_v=24), profile="volcano")


@pytest.fixture(scope="session")
def near_eq():
    return make_problem(ModelParams(), Grid(n_x=32, n_v=24), profile="near_equilibrium")


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
