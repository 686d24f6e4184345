"""Cohort simulation with family genotypes, case-control sampling and the
replication harness that summarizes bias, MSE, standard errors and coverage.

Per-replicate random streams come from ``numpy.random.default_rng([seed, rep])``
so results do not depend on how replicates are scheduled.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import expit

from fswel.baselines import fit_mar_ipw, fit_mcar_naive
from fswel.data import MISSING_G, Dataset
from fswel.errors import FswelError, InsufficientStratum
from fswel.estimator import FitConfig, fit_fswel
from fswel.genetics import PROXY_INDEX, hwe_probs
from fswel.model import ModelSpec
from fswel.variance import Z975

log = logging.getLogger(__name__)

LOG12, LOG15, LOG06 = math.log(1.2), math.log(1.5), math.log(0.6)

SCENARIOS = {
    "weak": dict(alpha3=LOG12, alpha4=LOG15, alpha5=LOG15),
    "strong": dict(alpha3=LOG15, alpha4=LOG15, alpha5=LOG15),
    "nd": dict(alpha3=LOG15, alpha4=0.0, alpha5=0.0),
    "mcar": dict(alpha1=0.0, alpha2=0.0, alpha3=0.0, alpha4=0.0, alpha5=0.0),
}


@dataclass
class SimConfig:
    theta: float = 0.2
    p_x_given_g: tuple = (0.3, 0.5, 0.35)
    beta1: float = LOG12
    beta2: float = LOG15
    prevalence: float = 0.03
    alpha1: float = LOG06
    alpha2: float = LOG12
    alpha3: float = LOG15
    alpha4: float = LOG15
    alpha5: float = LOG15
    availability: float = 0.8
    n_cases: int = 2000
    n_controls: int = 2000
    cohort_size: int = 100_000
    reps: int = 200
    seed: int = 20190101
    # "cohort": P(R=1) targeted in the source population; "sample": in the 1:1 case-control sample
    availability_scope: str = "cohort"
    # "all": cases and controls may lack genotypes; "controls": only controls
    missing_among: str = "all"
    # "spouse_child" or "parents" (two parents, or one with probability p_one_parent)
    proxy: str = "spouse_child"
    p_one_parent: float = 0.0
    fit: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p_x_given_g = tuple(float(v) for v in self.p_x_given_g)
        for name in ("theta", "prevalence", "availability"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if len(self.p_x_given_g) != 3 or not all(0 < p < 1 for p in self.p_x_given_g):
            raise ValueError("p_x_given_g needs three probabilities in (0, 1)")
        for name in ("n_cases", "n_controls", "cohort_size", "reps"):
            if getattr(self, name) < 0 or (name in ("cohort_size", "reps") and getattr(self, name) < 1):
                raise ValueError(f"{name} must be positive")
        if self.availability_scope not in ("cohort", "sample"):
            raise ValueError("availability_scope must be 'cohort' or 'sample'")
        if self.missing_among not in ("all", "controls"):
            raise ValueError("missing_among must be 'all' or 'controls'")
        if self.proxy not in ("spouse_child", "parents"):
            raise ValueError("proxy must be 'spouse_child' or 'parents'")

    @classmethod
    def scenario(cls, name, **overrides):
        return cls(**{**SCENARIOS[name], **overrides})

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        scen = d.pop("scenario", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown simulation options: {sorted(unknown)}")
        return cls.scenario(scen, **d) if scen else cls(**d)

    def to_dict(self):
        return asdict(self)

    @property
    def spec(self):
        if self.missing_among == "controls":
            return ModelSpec(("x",), ("x", "G"), ("1", "x", "G"), controls_only=True, mar_terms=("1", "x"))
        return ModelSpec(("x",), ("x", "G"), ("1", "Y", "x", "G", "Y:x", "Y:G"), mar_terms=("1", "Y", "x"))


# ---------------------------------------------------------------------------
# exact law of (X, G) and intercept calibration


def xg_law(config: SimConfig):
    """P(X=x, G=g) as a (2, 3) array."""
    pg = hwe_probs(config.theta)
    px = np.array(config.p_x_given_g)
    return np.vstack([(1 - px) * pg, px * pg])


def calibrate_intercept(target, marginalizer, lo=-60.0, hi=60.0):
    """Intercept b such that ``marginalizer(b)`` equals ``target``.

    ``marginalizer`` must be increasing in the intercept (any expectation of
    a logistic probability is).
    """
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    b = brentq(lambda v: marginalizer(v) - target, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    if abs(marginalizer(b) - target) > 1e-10:
        raise ValueError("intercept calibration missed the target")
    return b


_X = np.array([0.0, 1.0])[:, None]
_G = np.arange(3)[None, :]


def outcome_intercept(config: SimConfig):
    law = xg_law(config)
    lin = config.beta1 * _X + config.beta2 * _G
    return calibrate_intercept(config.prevalence, lambda b: float(np.sum(law * expit(b + lin))))


def _miss_lin(config, y):
    return (
        config.alpha1 * y
        + config.alpha2 * _X
        + config.alpha3 * _G
        + config.alpha4 * y * _X
        + config.alpha5 * y * _G
    )


def availability_intercept(config: SimConfig, beta0=None):
    law = xg_law(config)
    beta0 = outcome_intercept(config) if beta0 is None else beta0
    p1 = expit(beta0 + config.beta1 * _X + config.beta2 * _G)
    if config.availability_scope == "cohort":
        w1, w0 = law * p1, law * (1 - p1)
    else:
        n = config.n_cases + config.n_controls
        w1 = law * p1 / np.sum(law * p1) * config.n_cases / n
        w0 = law * (1 - p1) / np.sum(law * (1 - p1)) * config.n_controls / n
    if config.missing_among == "controls":
        # cases are always genotyped, so the target is met among controls
        w0 = w0 / w0.sum()
        return calibrate_intercept(config.availability, lambda a: float(np.sum(w0 * expit(a + _miss_lin(config, 0)))))

    def marg(a):
        return float(np.sum(w0 * expit(a + _miss_lin(config, 0))) + np.sum(w1 * expit(a + _miss_lin(config, 1))))

    return calibrate_intercept(config.availability, marg)


def truths(config: SimConfig):
    """True parameter values keyed by the names the estimators report."""
    beta0 = outcome_intercept(config)
    a0 = availability_intercept(config, beta0)
    out = {"x": config.beta1, "G": config.beta2, "theta": config.theta}
    if config.missing_among == "controls":
        out.update({"alpha[1]": a0, "alpha[x]": config.alpha2, "alpha[G]": config.alpha3})
    else:
        out.update(
            {
                "alpha[1]": a0,
                "alpha[Y]": config.alpha1,
                "alpha[x]": config.alpha2,
                "alpha[G]": config.alpha3,
                "alpha[Y:x]": config.alpha4,
                "alpha[Y:G]": config.alpha5,
            }
        )
    return out


# ---------------------------------------------------------------------------
# generation


@dataclass
class Cohort:
    g: np.ndarray
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    proxy: np.ndarray  # flat proxy configuration codes, set for every subject
    relatives: dict


def _draw_genotype(rng, theta, n):
    return rng.binomial(2, theta, size=n)


def _transmit(rng, gm, gf):
    return rng.binomial(1, gm / 2.0) + rng.binomial(1, gf / 2.0)


_SC_CODES = np.array([[PROXY_INDEX[("spouse_child", (a, b))] for b in range(3)] for a in range(3)])
_TP_CODES = np.array([[PROXY_INDEX[("two_parents", (a, b))] for b in range(3)] for a in range(3)])
_OP_CODES = np.array([PROXY_INDEX[("one_parent", (a,))] for a in range(3)])


def gen_cohort(config: SimConfig, rng, beta0=None, alpha0=None):
    """Source population with genotypes, relatives, covariate, outcome and availability."""
    n = config.cohort_size
    beta0 = outcome_intercept(config) if beta0 is None else beta0
    alpha0 = availability_intercept(config, beta0) if alpha0 is None else alpha0
    if config.proxy == "spouse_child":
        g = _draw_genotype(rng, config.theta, n)
        gs = _draw_genotype(rng, config.theta, n)
        gc = _transmit(rng, g, gs)
        proxy = _SC_CODES[gs, gc]
        relatives = {"gs": gs, "gc": gc}
    else:
        gm = _draw_genotype(rng, config.theta, n)
        gf = _draw_genotype(rng, config.theta, n)
        g = _transmit(rng, gm, gf)
        one = rng.random(n) < config.p_one_parent
        proxy = np.where(one, _OP_CODES[gm], _TP_CODES[gm, gf])
        relatives = {"gm": gm, "gf": np.where(one, MISSING_G, gf)}
    px = np.asarray(config.p_x_given_g)[g]
    x = (rng.random(n) < px).astype(float)
    y = (rng.random(n) < expit(beta0 + config.beta1 * x + config.beta2 * g)).astype(np.int64)
    lin = (
        alpha0
        + config.alpha1 * y
        + config.alpha2 * x
        + config.alpha3 * g
        + config.alpha4 * y * x
        + config.alpha5 * y * g
    )
    if config.missing_among == "controls":
        lin = alpha0 + config.alpha2 * x + config.alpha3 * g
    r = (rng.random(n) < expit(lin)).astype(np.int64)
    if config.missing_among == "controls":
        r[y == 1] = 1
    return Cohort(g, x, y, r, proxy, relatives)


def sample_case_control(cohort: Cohort, n_cases, n_controls, rng):
    """Simple random samples without replacement within each outcome stratum."""
    cases = np.flatnonzero(cohort.y == 1)
    controls = np.flatnonzero(cohort.y == 0)
    if len(cases) < n_cases or len(controls) < n_controls:
        raise InsufficientStratum(
            f"need {n_cases} cases / {n_controls} controls, cohort has {len(cases)} / {len(controls)}"
        )
    idx = np.concatenate(
        [rng.choice(cases, n_cases, replace=False), rng.choice(controls, n_controls, replace=False)]
    )
    r = cohort.r[idx]
    return Dataset(
        covariates=("x",),
        y=cohort.y[idx],
        x=cohort.x[idx][:, None],
        r=r,
        g=np.where(r == 1, cohort.g[idx], MISSING_G),
        proxy=cohort.proxy[idx],
    )


# ---------------------------------------------------------------------------
# replication harness

COLUMNS = ["rep", "method", "parameter", "truth", "estimate", "se", "converged"]


def _rows_for(rep, method, names, est, se, truth, converged):
    return [
        {
            "rep": rep,
            "method": method,
            "parameter": n,
            "truth": truth.get(n, np.nan),
            "estimate": float(e),
            "se": float(s),
            "converged": bool(converged),
        }
        for n, e, s in zip(names, est, se)
    ]


def run_one(config: SimConfig, rep: int, intercepts=None):
    """Generate one case-control sample and fit all three estimators."""
    rng = np.random.default_rng([config.seed, rep])
    beta0, alpha0 = intercepts or (None, None)
    cohort = gen_cohort(config, rng, beta0, alpha0)
    data = sample_case_control(cohort, config.n_cases, config.n_controls, rng)
    spec = config.spec
    truth = truths(config)
    eta_names = spec.eta_names
    rows = []
    try:
        fit = fit_fswel(spec, data, FitConfig.from_dict(config.fit))
        rows += _rows_for(rep, "FS-WEL", fit.names, fit.estimates(), fit.std_errors(), truth, fit.converged)
    except FswelError as exc:
        log.warning("rep %d: FS-WEL failed: %s", rep, exc)
        rows += _rows_for(rep, "FS-WEL", spec.eta_names + spec.alpha_names, [np.nan] * 99, [np.nan] * 99, truth, False)
    for method, fitter in (("MCAR", fit_mcar_naive), ("MAR", fit_mar_ipw)):
        try:
            res = fitter(spec, data)
            rows += _rows_for(rep, method, eta_names, res.estimates(), res.std_errors, truth, True)
        except FswelError as exc:
            log.warning("rep %d: %s failed: %s", rep, method, exc)
            rows += _rows_for(rep, method, eta_names, [np.nan] * 99, [np.nan] * 99, truth, False)
    return rows


def _run_chunk(args):
    config, reps, intercepts = args
    out = []
    for rep in reps:
        out.extend(run_one(config, rep, intercepts))
    return out


def run_replications(config: SimConfig, workers=1, reps=None):
    """Per-replicate estimates as a DataFrame with columns ``COLUMNS``.

    The output is sorted by (rep, method, parameter order) and is identical
    for any number of workers.
    """
    reps = range(config.reps) if reps is None else reps
    reps = list(reps)
    beta0 = outcome_intercept(config)
    intercepts = (beta0, availability_intercept(config, beta0))
    if workers <= 1:
        rows = _run_chunk((config, reps, intercepts))
    else:
        chunks = [(config, reps[i::workers], intercepts) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [row for part in pool.map(_run_chunk, chunks) for row in part]
    df = pd.DataFrame(rows, columns=COLUMNS)
    order = {m: i for i, m in enumerate(["FS-WEL", "MCAR", "MAR"])}
    df["_m"] = df["method"].map(order)
    df["_p"] = df.groupby(["rep", "method"]).cumcount()
    df = df.sort_values(["rep", "_m", "_p"], kind="stable").drop(columns=["_m", "_p"]).reset_index(drop=True)
    return df


@dataclass
class RepSummary:
    table: pd.DataFrame
    n_reps: int
    failures: dict

    def failure_rate(self, method="FS-WEL"):
        return self.failures.get(method, 0) / self.n_reps if self.n_reps else 0.0

    def get(self, method, parameter, column):
        row = self.table[(self.table.method == method) & (self.table.parameter == parameter)]
        return float(row[column].iloc[0])


def summarize(df: pd.DataFrame):
    """Bias, MSE, empirical and mean asymptotic SE, and 95% Wald coverage per method and parameter.

    Non-converged replicates are dropped and counted in ``failures``.
    """
    n_reps = int(df["rep"].nunique())
    failures = {}
    out = []
    for (method, parameter), grp in df.groupby(["method", "parameter"], sort=False):
        ok = grp[grp["converged"].astype(bool) & np.isfinite(grp["estimate"])]
        failures[method] = max(failures.get(method, 0), len(grp) - len(ok))
        est = ok["estimate"].to_numpy(float)
        se = ok["se"].to_numpy(float)
        truth = float(grp["truth"].iloc[0])
        n = len(est)
        if n < 2:
            continue
        emp = float(np.std(est, ddof=1))
        cover = np.abs(est - truth) <= Z975 * se
        out.append(
            {
                "method": method,
                "parameter": parameter,
                "n": n,
                "truth": truth,
                "mean": float(est.mean()),
                "bias": float(est.mean() - truth),
                "mse": float(np.mean((est - truth) ** 2)),
                "emp_se": emp,
                "asy_se": float(np.mean(se)),
                "coverage": float(cover.mean()) if np.all(np.isfinite(se)) else np.nan,
                "degenerate": bool(emp == 0.0 or np.all(se == 0)),
            }
        )
    return RepSummary(pd.DataFrame(out), n_reps, failures)
