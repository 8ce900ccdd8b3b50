import numpy as np
import pytest

from psgarousal.features import FEATURE_ROLES
from psgarousal.record import ChannelRole
from psgarousal.synth import SynthParams, synth_record

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_record():
    """Two-minute synthetic record with a fixed seed."""
    return synth_record(SynthParams(duration_s=120, arousal_rate=60, seed=7), "short")


@pytest.fixture(scope="session")
def hour_record():
    return synth_record(SynthParams(duration_s=3600, seed=7), "hour")


def random_epoch(rng, n=6000):
    """(12, n) epoch in FEATURE_ROLES order with plausible SaO2 values."""
    x = rng.normal(size=(len(FEATURE_ROLES), n)) * rng.uniform(0.1, 50.0, size=(len(FEATURE_ROLES), 1))
    sao2 = FEATURE_ROLES.index(ChannelRole.SAO2)
    x[sao2] = np.clip(95 + 3 * rng.normal(size=n), 0, 100)
    return x
