import sys

import numpy as np
import pytest

from fswel.simulation import SimConfig, gen_cohort, sample_case_control


def simulate_sample(seed=1, n_cases=400, n_controls=400, cohort_size=30_000, **overrides):
    """One case-control sample from the simulation model (strong scenario by default)."""
    config = SimConfig.scenario("strong", n_cases=n_cases, n_controls=n_controls, cohort_size=cohort_size, **overrides)
    rng = np.random.default_rng(seed)
    cohort = gen_cohort(config, rng)
    return config, sample_case_control(cohort, n_cases, n_controls, rng)


@pytest.fixture(scope="session")
def sim_sample():
    return simulate_sample()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
