import time

import pytest
from hypothesis import settings

from mmse_uplink.montecarlo import run_experiment
from mmse_uplink.params import Fractional, PathLossInversion, ScenarioParams, TwoLevel

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# network used by the figure-reproduction runs
NETWORK = dict(alpha=4.0, rho_m=1.0, rho_c=1e-4, K=10, R=2000.0, sampling_mode="fast")
TRIALS = 1000


def _runs(policy, Ns, seed):
    out, t0 = {}, time.perf_counter()
    for N in Ns:
        p = ScenarioParams(N=N, policy=policy, **NETWORK)
        out[N] = run_experiment(p, TRIALS, seed)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def inversion_runs():
    """Path-loss inversion, N in {8, 16, 32, 64}: (summaries by N, seconds)."""
    return _runs(PathLossInversion(), [8, 16, 32, 64], seed=3)


@pytest.fixture(scope="session")
def fractional_runs():
    return _runs(Fractional(0.5), [8, 128], seed=4)


@pytest.fixture(scope="session")
def two_level_runs():
    return _runs(TwoLevel(0.5, 1.0), [64], seed=2)
