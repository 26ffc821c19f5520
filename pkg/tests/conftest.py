import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rhfedmtl.config import SystemConfig  # noqa: E402
from rhfedmtl.data import synth_tasks  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_data():
    """3 tasks, 3 terminals of 20 samples, 24 test rows per task."""
    return synth_tasks(3, 3, 84, 10, 0.7, 0.05, seed=0)


@pytest.fixture
def small_config():
    return SystemConfig(n_tasks=3, n_terminals=3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
