import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        ok, detail = module.RESULTS.get(n, (False, "not run"))
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
