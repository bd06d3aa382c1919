"""Shared fixtures.

Test docstrings carry a provenance tag:
[DERIVED] an independent oracle computes the expected value,
[PAPER] the expected value comes from the published experiment or statement,
[TRIVIAL] the expectation follows directly from a definition.
"""
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from nlscat.rt_space import build_rt_space
from nlscat.surface_mesh import make_cube_mesh

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def cube1():
    return build_rt_space(make_cube_mesh(n=1))


@pytest.fixture(scope="session")
def cube2():
    return build_rt_space(make_cube_mesh(n=2))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
