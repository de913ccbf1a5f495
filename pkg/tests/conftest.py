import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance reporting and shared desk-scale models ---------------------------

import os  # noqa: E402
from pathlib import Path  # noqa: E402

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Records ``criterion -> (passed, detail)``; printed in the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def desk_cache() -> Path:
    return Path(os.environ.get("FREQEST_DESK_CACHE", Path(__file__).resolve().parents[1] / "artifacts" / "desk"))


@pytest.fixture(scope="session")
def desk(desk_cache):
    """``(DeskConfig, fr_bundle, counter_bundle)``; trains once, then cached on disk."""
    from freqest.desk import DeskConfig, desk_models

    cfg = DeskConfig()
    fr, counter = desk_models(desk_cache, cfg)
    return cfg, fr, counter
