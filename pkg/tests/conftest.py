import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from powercql import collect, nodesim
from powercql.core import DEFAULT_GRID

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def profiles():
    return nodesim.builtin_profiles()


@pytest.fixture(scope="session")
def sim_dataset(profiles):
    train, _ = collect.split_train_profiles(profiles)
    return collect.collect(train, DEFAULT_GRID, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance_log.RESULTS):
        ok, detail = acceptance_log.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
