import warnings

import numpy as np
import pytest

from ehalloc.model import Scenario


def random_scenario(seed, n=None, m=None, k=None, eps=None, equal=False, max_n=2, max_m=4, max_k=4):
    """Small random scenario with a random partition, capped or uncapped power and mixed epsilon."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, max_n + 1))
    m = m or int(rng.integers(n, max_m + 1))
    k = k or int(rng.integers(1, max_k + 1))
    cuts = np.sort(rng.choice(np.arange(1, m), n - 1, replace=False)) if n > 1 else []
    parts = np.split(np.arange(m), cuts)
    harvest = rng.uniform(0, 3, (n, k))
    gains = rng.exponential(2, (m, k)) + 0.05
    cap = rng.uniform(1, 5, n)
    pmax = np.where(rng.random(n) < 0.5, rng.uniform(1, 4, n), np.inf)
    weights = np.ones(m) if equal else rng.uniform(0.2, 2, m)
    e = eps if eps is not None else float(rng.choice([0.0, 0.01, 0.05]))
    return Scenario.create([tuple(p) for p in parts], harvest, gains, cap, pmax, weights, e)


@pytest.fixture
def make_scenario():
    return random_scenario


@pytest.fixture
def tiny():
    """One transmitter, two receivers, two slots."""
    return Scenario.create([(0, 1)], [[2.0, 1.0]], [[1.5, 0.5], [0.7, 2.0]], 3.0, None, [1.0, 1.5], 0.0)


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
