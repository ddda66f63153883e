import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so timing-sensitive tests measure execution only."""
    from abfsim import generators
    from abfsim.engine import run
    from abfsim.schedule import synchronous_schedule

    g = generators.two_node()
    tr = run(g, synchronous_schedule(g, 2), 0.0, granularity="instr")
    tr.instr_metrics
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
