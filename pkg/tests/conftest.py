import numpy as np
import pytest

from fanwatch.core import GYRO_CHANNELS, AlignedTable
from fanwatch.synthgen import ImpellerProfile, ScheduleConfig, generate_run

# short plateaus keep unit tests quick; acceptance tests use the desk scale
SMALL = ScheduleConfig(plateau_s=2.0, ramp_s=0.5)


@pytest.fixture(scope="session")
def small_schedule():
    return SMALL


@pytest.fixture(scope="session")
def small_run():
    return generate_run(SMALL, ImpellerProfile(), seed=5)


@pytest.fixture(scope="session")
def small_damaged_run():
    return generate_run(SMALL, ImpellerProfile().damaged(3.0), seed=5, impeller="damaged")


def make_table(n=10, p=3, rate=1000.0, seed=0, plateau=None):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    names = GYRO_CHANNELS[:p]
    idx = np.ones(n, np.int64) if plateau is None else np.asarray(plateau)
    return AlignedTable(t, names, rng.normal(size=(n, p)), rng.normal(size=n) * 100, idx)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdicts collected by test_acceptance."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
