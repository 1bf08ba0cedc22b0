from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hetbf.oracle import SimulationSpec, simulate_dataset

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def sim_summaries(n=(50, 60, 40), seed=0, model="ES", mean=0.4, het=0.2, **kw):
    """Summaries of one simulated dataset."""
    return simulate_dataset(SimulationSpec(n=tuple(n), model=model, mean=mean, het=het, **kw), seed).summaries()


def sim_suffstats(n=(50, 60, 40), seed=0, model="ES", mean=0.4, het=0.2, **kw):
    return simulate_dataset(SimulationSpec(n=tuple(n), model=model, mean=mean, het=het, **kw), seed).suffstats()


@pytest.fixture
def rng():
    return np.random.default_rng(20140101)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""

    def report(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config.stash.setdefault(ACCEPTANCE, []).append((number, line))
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
