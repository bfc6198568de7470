import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from affordsim.config import PipelineConfig, train_models

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion covered by a test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        item.config._criteria[item.nodeid] = (m.args[0], m.args[1], rep.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    by_n: dict = {}
    for n, text, outcome in results.values():
        by_n.setdefault(n, []).append((text, outcome))
    terminalreporter.section("acceptance criteria")
    for n in sorted(by_n):
        parts = by_n[n]
        ok = all(o == "passed" for _, o in parts)
        failed = [t for t, o in parts if o != "passed"]
        detail = "; ".join(t for t, _ in parts) if ok else "failed: " + "; ".join(failed)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def trained():
    """Models trained with the default pipeline (about ten seconds)."""
    return train_models(PipelineConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
