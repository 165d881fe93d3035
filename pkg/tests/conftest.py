import numpy as np
import pytest

from labrisk.cohort import SynthConfig, synthesize_cohort


@pytest.fixture(scope="session")
def small_cohort():
    return synthesize_cohort(SynthConfig(n_subjects=400, target_visits=3000, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict: ``criterion(n, passed, detail)``."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(n, passed, detail):
        store[n] = (bool(passed), detail)
        return passed

    return record


_VERDICTS = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        passed, detail = store[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
