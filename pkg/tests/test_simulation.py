import math

import numpy as np
import pandas as pd
import pytest
from scipy.special import expit

from fswel.baselines import fit_mar_ipw, fit_mcar_naive
from fswel.errors import InsufficientStratum
from fswel.estimator import fit_fswel
from fswel.genetics import PROXY_CONFIGS
from fswel.simulation import (
    COLUMNS,
    LOG12,
    LOG15,
    SimConfig,
    availability_intercept,
    calibrate_intercept,
    gen_cohort,
    outcome_intercept,
    run_one,
    run_replications,
    sample_case_control,
    summarize,
    truths,
)

SMALL = dict(n_cases=250, n_controls=250, cohort_size=20_000)


def test_calibrate_symmetric_target():
    assert calibrate_intercept(0.5, lambda b: float(expit(b))) == pytest.approx(0.0, abs=1e-12)


def test_calibrate_monotone_and_bounds():
    law = np.array([0.2, 0.5, 0.3])
    lin = np.array([0.0, 0.4, 0.8])
    bs = [calibrate_intercept(t, lambda b: float(law @ expit(b + lin))) for t in (0.01, 0.03, 0.1, 0.5)]
    assert np.all(np.diff(bs) > 0)
    with pytest.raises(ValueError):
        calibrate_intercept(1.2, lambda b: float(expit(b)))


def test_prevalence_on_large_cohort():
    config = SimConfig(beta1=LOG12, beta2=LOG12, cohort_size=1_000_000)
    cohort = gen_cohort(config, np.random.default_rng(1))
    assert abs(cohort.y.mean() - 0.03) < 0.001


def test_availability_mean_weak_setting():
    config = SimConfig.scenario("weak", cohort_size=1_000_000)
    assert config.alpha1 == pytest.approx(math.log(0.6)) and config.alpha2 == pytest.approx(LOG12)
    cohort = gen_cohort(config, np.random.default_rng(2))
    assert abs(cohort.r.mean() - 0.8) < 3 * math.sqrt(0.16 / 1e6) + 1e-4


def test_cohort_genetics_and_covariate_law():
    config = SimConfig(cohort_size=200_000)
    cohort = gen_cohort(config, np.random.default_rng(3))
    n = len(cohort.g)
    freq = np.bincount(cohort.g, minlength=3) / n
    expected = np.array([0.64, 0.32, 0.04])
    assert np.all(np.abs(freq - expected) < 3 * np.sqrt(expected * (1 - expected) / n))
    gs, gc = cohort.relatives["gs"], cohort.relatives["gc"]
    assert np.all(gc[(cohort.g == 0) & (gs == 0)] == 0)
    het = cohort.g == 1
    p = cohort.x[het].mean()
    assert abs(p - 0.5) < 3 * math.sqrt(0.25 / het.sum())
    kinds = {PROXY_CONFIGS[c][0] for c in np.unique(cohort.proxy)}
    assert kinds == {"spouse_child"}


def test_parent_proxies():
    config = SimConfig(cohort_size=50_000, proxy="parents", p_one_parent=0.4)
    cohort = gen_cohort(config, np.random.default_rng(4))
    kinds = np.array([PROXY_CONFIGS[c][0] for c in cohort.proxy])
    assert abs((kinds == "one_parent").mean() - 0.4) < 0.01
    both = kinds == "two_parents"
    gm, gf = cohort.relatives["gm"][both], cohort.relatives["gf"][both]
    assert np.all(cohort.g[both][(gm == 0) & (gf == 0)] == 0)
    assert np.all(cohort.g[both][(gm == 2) & (gf == 2)] == 2)


def test_controls_only_missingness():
    config = SimConfig(cohort_size=50_000, missing_among="controls")
    cohort = gen_cohort(config, np.random.default_rng(5))
    assert np.all(cohort.r[cohort.y == 1] == 1)
    assert abs(cohort.r[cohort.y == 0].mean() - 0.8) < 0.01


def test_sampling():
    config = SimConfig(cohort_size=20_000)
    cohort = gen_cohort(config, np.random.default_rng(6))
    a = sample_case_control(cohort, 0, 300, np.random.default_rng(7))
    assert len(a) == 300 and np.all(a.y == 0)
    b = sample_case_control(cohort, 100, 300, np.random.default_rng(7))
    c = sample_case_control(cohort, 100, 300, np.random.default_rng(7))
    for field in ("y", "x", "r", "g", "proxy"):
        assert np.array_equal(getattr(b, field), getattr(c, field))
    assert np.all(b.g[b.r == 0] == -1)
    with pytest.raises(InsufficientStratum):
        sample_case_control(cohort, 10 * int(cohort.y.sum()), 10, np.random.default_rng(0))


def test_sampled_case_fraction_is_hypergeometric():
    config = SimConfig(cohort_size=20_000)
    cohort = gen_cohort(config, np.random.default_rng(8))
    n_cases, reps = 200, 300
    cases = cohort.y == 1
    N, K = int(cases.sum()), int(cohort.x[cases].sum())
    shares = [sample_case_control(cohort, n_cases, 0, np.random.default_rng(s)).x.mean() for s in range(reps)]
    # x-share of a simple random sample of cases: hypergeometric mean K/N
    var = (K / N) * (1 - K / N) * (N - n_cases) / (N - 1) / n_cases
    assert abs(np.mean(shares) - K / N) < 4 * math.sqrt(var / reps)
    assert abs(np.var(shares, ddof=1) / var - 1) < 0.3


def test_truths_and_spec():
    config = SimConfig()
    t = truths(config)
    assert t["x"] == LOG12 and t["G"] == LOG15 and t["theta"] == 0.2
    assert set(config.spec.alpha_names) <= set(t)
    assert t["alpha[1]"] == availability_intercept(config, outcome_intercept(config))
    co = SimConfig(missing_among="controls")
    assert set(co.spec.alpha_names) == {k for k in truths(co) if k.startswith("alpha")}


def test_config_validation_and_scenarios():
    assert SimConfig.from_dict({"scenario": "nd", "reps": 5}).alpha4 == 0.0
    assert SimConfig.scenario("mcar").alpha1 == 0.0
    with pytest.raises(ValueError):
        SimConfig.from_dict({"bogus": 1})
    for bad in ({"theta": 0.0}, {"p_x_given_g": (0.3, 0.5)}, {"reps": 0}, {"proxy": "aunt"}):
        with pytest.raises(ValueError):
            SimConfig(**bad)
    assert SimConfig.from_dict(SimConfig(reps=7).to_dict()) == SimConfig(reps=7)


def test_single_replicate_matches_direct_fits():
    config = SimConfig(reps=1, **SMALL)
    df = run_replications(config)
    assert list(df.columns) == COLUMNS
    rng = np.random.default_rng([config.seed, 0])
    data = sample_case_control(gen_cohort(config, rng), config.n_cases, config.n_controls, rng)
    fit = fit_fswel(config.spec, data)
    fs = df[df.method == "FS-WEL"]
    assert np.array_equal(fs.estimate.to_numpy(), fit.estimates())
    assert np.array_equal(fs.se.to_numpy(), fit.std_errors())
    assert np.array_equal(df[df.method == "MCAR"].estimate.to_numpy(), fit_mcar_naive(config.spec, data).estimates())
    assert np.array_equal(df[df.method == "MAR"].estimate.to_numpy(), fit_mar_ipw(config.spec, data).estimates())


def test_results_independent_of_worker_count():
    config = SimConfig(reps=4, **SMALL)
    a = run_replications(config, workers=1)
    b = run_replications(config, workers=3)
    pd.testing.assert_frame_equal(a, b, check_exact=True)
    pd.testing.assert_frame_equal(summarize(a).table, summarize(b).table, check_exact=True)
    assert np.array_equal(run_one(config, 2)[0]["estimate"], a[a.rep == 2].estimate.iloc[0])


def _frame(estimates, truth=0.5, se=0.1, converged=True):
    return pd.DataFrame(
        {
            "rep": range(len(estimates)),
            "method": "FS-WEL",
            "parameter": "G",
            "truth": truth,
            "estimate": estimates,
            "se": se,
            "converged": converged,
        }
    )


def test_summary_constant_estimates_flagged():
    s = summarize(_frame([0.5] * 5, se=0.0))
    assert s.get("FS-WEL", "G", "bias") == 0.0 and s.get("FS-WEL", "G", "mse") == 0.0
    assert bool(s.table.degenerate.iloc[0])


def test_summary_symmetric_estimates():
    d = 0.2
    s = summarize(_frame([0.5 - d, 0.5 + d]))
    assert s.get("FS-WEL", "G", "bias") == pytest.approx(0.0, abs=1e-15)
    assert s.get("FS-WEL", "G", "mse") == pytest.approx(d**2)
    assert s.get("FS-WEL", "G", "coverage") == 0.0  # both are 2 SE away
    assert s.get("FS-WEL", "G", "emp_se") == pytest.approx(math.sqrt(2) * d)


def test_summary_drops_failures():
    df = _frame([0.4, 0.6, np.nan, 0.5])
    df.loc[2, "converged"] = False
    s = summarize(df)
    assert s.failures == {"FS-WEL": 1}
    assert s.failure_rate() == 0.25
    assert s.get("FS-WEL", "G", "n") == 3
    shuffled = summarize(df.sample(frac=1.0, random_state=1))
    pd.testing.assert_frame_equal(s.table, shuffled.table)
