"""Weighted empirical-likelihood estimation of the association model jointly
with a genotype-dependent availability model.

Three coupled pieces:

* the covariate law among controls, ``delta[j, g] = P(X = x_j | G = g, Y = 0)``,
  estimated from genotyped controls weighted by 1 / P(R=1 | Y=0, x, g);
* the inverse-probability-weighted empirical-likelihood score for
  ``eta = (beta, theta)``;
* the availability-model score with each ungenotyped subject's genotype
  integrated out against its relatives' genotypes.

``fit_fswel`` alternates between the availability parameters and ``eta``
and finishes with a joint Newton polish of the full system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from fswel import genetics
from fswel.baselines import fit_mcar_naive
from fswel.data import Dataset, SubjectRecord, compress
from fswel.errors import (
    CompleteSeparation,
    DegenerateWeight,
    EmptyGenotypeStratum,
    IncompatibleProxy,
    InvariantViolation,
    NoAdjacentPattern,
    NonConvergence,
    PatternNotInDelta,
    SingularJacobian,
)
from fswel.model import AssocParams, MissParams, ModelSpec, term_matrix

log = logging.getLogger(__name__)

G3 = np.arange(3)


@dataclass
class FitConfig:
    tol: float = 1e-10  # residual inf-norm, inner Newton solves and final joint check
    max_iter: int = 50
    outer_tol: float = 1e-8  # parameter change inf-norm between sweeps
    max_outer: int = 100
    fd_step: float = 1e-6
    weight_floor: float = 1e-6
    theta_bounds: tuple = (1e-6, 1 - 1e-6)
    smooth_support: bool = True
    polish: bool = True
    variance: bool = True
    # "ratio": delta-method influence of the weighted ratio estimator;
    # "plain": I(R=1, x, g) / c_i - delta, denominator treated as known
    influence: str = "ratio"
    alpha_bound: float = 30.0

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if "theta_bounds" in d:
            d["theta_bounds"] = tuple(d["theta_bounds"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        cfg = cls(**d)
        for name in ("tol", "outer_tol", "fd_step"):
            if not getattr(cfg, name) > 0:
                raise ValueError(f"{name} must be positive")
        if cfg.influence not in ("ratio", "plain"):
            raise ValueError("influence must be 'ratio' or 'plain'")
        return cfg


@dataclass
class DeltaTable:
    """Covariate-pattern probabilities given genotype among controls.

    ``delta[j, g]`` is P(X = patterns[j] | G = g, Y = 0); columns sum to one.
    """

    patterns: np.ndarray
    delta: np.ndarray

    def column_sums(self):
        return self.delta.sum(axis=0)

    def index_of(self, x):
        hit = np.flatnonzero(np.all(self.patterns == np.asarray(x, dtype=float), axis=1))
        if len(hit) == 0:
            raise PatternNotInDelta(f"covariate pattern {tuple(x)} is not in the delta table")
        return int(hit[0])


@dataclass
class FitResult:
    spec: ModelSpec
    eta_hat: AssocParams
    alpha_hat: MissParams
    delta_hat: DeltaTable
    cov: np.ndarray | None
    iterations: int
    converged: bool
    final_residual_norm: float
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def names(self):
        return self.spec.eta_names + self.spec.alpha_names

    def estimates(self):
        return np.concatenate([self.eta_hat.to_vector(), self.alpha_hat.alpha])

    def std_errors(self):
        if self.cov is None:
            return np.full(len(self.names), np.nan)
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


# ---------------------------------------------------------------------------
# delta support smoothing


def smoothing_plan(patterns, support, targets):
    """Pairs (target, neighbour) per genotype column.

    ``support[j, g]`` marks cells with positive control mass. Each target
    pattern is paired with the nearest supported pattern in Euclidean
    distance, ties to the lowest id.
    """
    plan = []
    for g in G3:
        cand = np.flatnonzero(support[:, g])
        if len(cand) == 0:
            raise NoAdjacentPattern(f"no control support for genotype {g}")
        pairs = []
        for t in targets:
            d = np.linalg.norm(patterns[cand] - patterns[t], axis=1)
            pairs.append((int(t), int(cand[np.argmin(d)])))
        plan.append(pairs)
    return plan


def apply_plan(delta, plan):
    out = delta.copy()
    for g, pairs in enumerate(plan):
        for t, nb in pairs:
            half = out[nb, g] / 2.0
            out[t, g] = half
            out[nb, g] = half
    return out


def extend_delta_support(delta: DeltaTable, case_patterns):
    """Give mass to covariate patterns seen only among cases.

    For each such pattern the adjacent control pattern's probability is
    split evenly between the two, which keeps every column summing to one.
    """
    case_patterns = np.atleast_2d(np.asarray(case_patterns, dtype=float))
    if case_patterns.size == 0:
        return DeltaTable(delta.patterns.copy(), delta.delta.copy())
    patterns = delta.patterns
    table = delta.delta
    new = [p for p in case_patterns if not np.any(np.all(patterns == p, axis=1))]
    if new:
        patterns = np.vstack([patterns, np.array(new)])
        table = np.vstack([table, np.zeros((len(new), 3))])
    targets = []
    for p in case_patterns:
        j = int(np.flatnonzero(np.all(patterns == p, axis=1))[0])
        if table[j].sum() == 0:
            targets.append(j)
    support = table > 0
    support[targets] = False
    plan = smoothing_plan(patterns, support, targets)
    return DeltaTable(patterns, apply_plan(table, plan))


# ---------------------------------------------------------------------------
# numerical helpers


def fd_jacobian(fun, x, step=1e-6):
    """Central finite-difference Jacobian with step ``step * max(1, |x_k|)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(len(x)):
        h = step * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * h))
    return np.column_stack(cols)


def newton(fun, x0, tol, max_iter, step=1e-6, project=None, label="system"):
    """Damped Newton iteration on ``fun(x) = 0`` with a finite-difference Jacobian.

    Returns (x, residual, iterations). Step halving keeps the residual
    2-norm decreasing; ``project`` maps trial points back into the domain.
    """
    project = project or (lambda v: v)
    x = project(np.asarray(x0, dtype=float).copy())
    F = np.asarray(fun(x))
    for it in range(max_iter + 1):
        if np.max(np.abs(F)) < tol:
            return x, F, it
        if it == max_iter:
            break
        J = fd_jacobian(fun, x, step)
        if not np.all(np.isfinite(J)):
            raise SingularJacobian(f"{label}: non-finite Jacobian")
        if np.linalg.cond(J) > 1e14:
            raise SingularJacobian(f"{label}: Jacobian is numerically rank deficient")
        delta = np.linalg.solve(J, -F)
        norm0 = np.linalg.norm(F)
        lam = 1.0
        while True:
            xn = project(x + lam * delta)
            Fn = np.asarray(fun(xn))
            if np.all(np.isfinite(Fn)) and np.linalg.norm(Fn) <= (1 - 1e-4 * lam) * norm0:
                break
            lam /= 2.0
            if lam < 1e-10:
                raise NonConvergence(f"{label}: line search failed at residual {np.max(np.abs(F)):.3g}")
        x, F = xn, Fn
    raise NonConvergence(f"{label}: no convergence in {max_iter} iterations (residual {np.max(np.abs(F)):.3g})")


def theta_score(theta):
    return G3 / theta - (2 - G3) / (1 - theta)


def _hwe(theta):
    q = 1.0 - theta
    return np.array([q * q, 2.0 * theta * q, theta * theta])


# ---------------------------------------------------------------------------
# the estimating system on compressed data


class Problem:
    """Estimating equations evaluated on distinct data rows with frequency weights."""

    def __init__(self, spec: ModelSpec, data: Dataset, config: FitConfig | None = None):
        self.spec = spec
        self.config = config or FitConfig()
        if tuple(data.covariates) != tuple(spec.covariates):
            raise ValueError(f"dataset covariates {data.covariates} do not match model {spec.covariates}")
        c = compress(data)
        self.c = c
        P = c.patterns
        J = len(P)
        self.J = J
        self.patterns = P
        rep = np.repeat(np.arange(J), 3)
        gg = np.tile(G3, J)
        self.Z = term_matrix(spec.assoc_terms, spec.covariates, P[rep], gg).reshape(J, 3, -1)
        self.D = np.stack(
            [term_matrix(spec.miss_terms, spec.covariates, P[rep], gg, y).reshape(J, 3, -1) for y in (0, 1)]
        )
        self.N = c.w.sum()
        self.N0 = c.w[c.y == 0].sum()
        if self.N0 <= 0:
            raise EmptyGenotypeStratum("no controls in the data")

        comp = c.r == 1
        self.comp = comp
        self.ci = np.flatnonzero(comp)
        self.cy, self.cj, self.cg, self.cw = c.y[comp], c.j[comp], c.g[comp], c.w[comp]
        self.Zc = self.Z[self.cj, self.cg]
        self.Dc = self.D[self.cy, self.cj, self.cg]
        cc = self.cy == 0
        self.cc_flat = self.cj[cc] * 3 + self.cg[cc]
        self.cc_w = self.cw[cc]

        miss = ~comp
        self.mi = np.flatnonzero(miss)
        self.my, self.mj, self.mp, self.mw = c.y[miss], c.j[miss], c.proxy[miss], c.w[miss]
        if spec.controls_only and np.any(self.my == 1):
            raise InvariantViolation("controls-only missingness model but some cases lack genotypes")
        self.Dm = self.D[self.my, self.mj]
        ok = genetics.compatible_mask()[self.mp]
        if not ok.all():
            kind, gts = genetics.PROXY_CONFIGS[self.mp[~ok][0]]
            raise IncompatibleProxy(f"{kind} genotypes {gts} are Mendelian-incompatible")
        self.n_missing_no_proxy = float(self.mw[self.mp == 0].sum())

        counts = np.bincount(self.cc_flat, weights=self.cc_w, minlength=3 * J).reshape(J, 3)
        self.raw_support = counts > 0
        for g in G3:
            if not self.raw_support[:, g].any():
                raise EmptyGenotypeStratum(f"no genotyped controls with G={g}")
        targets = np.flatnonzero(~self.raw_support.any(axis=1))
        self.case_only = targets
        self.plan = (
            smoothing_plan(P, self.raw_support, targets) if (self.config.smooth_support and len(targets)) else None
        )

    # -- pieces --------------------------------------------------------------

    def pi(self, alpha):
        p = expit(self.D @ alpha)
        if self.spec.controls_only:
            p[1] = 1.0
        return p

    def delta(self, alpha, pi=None, smooth=True):
        pi = self.pi(alpha) if pi is None else pi
        pc = pi[0].reshape(-1)[self.cc_flat]
        if len(pc) and pc.min() < self.config.weight_floor:
            raise DegenerateWeight(f"availability probability {pc.min():.3g} below floor")
        num = np.bincount(self.cc_flat, weights=self.cc_w / pc, minlength=3 * self.J).reshape(self.J, 3)
        col = num.sum(axis=0)
        if np.any(col <= 0):
            raise EmptyGenotypeStratum("a genotype value has no genotyped controls")
        d = num / col
        if smooth and self.plan is not None:
            d = apply_plan(d, self.plan)
        return d

    def _qstats(self, eta, delta):
        beta, theta = eta[:-1], eta[-1]
        lin = self.Z @ beta
        Q = delta * _hwe(theta) * np.exp(lin)
        S = Q.sum()
        Ez = np.tensordot(Q, self.Z, axes=([0, 1], [0, 1])) / S
        s = theta_score(theta)
        Es = Q.sum(axis=0) @ s / S
        return lin, Ez, s, Es

    def u_complete(self, eta, delta):
        """Per-row empirical-likelihood score for the genotyped rows."""
        _, Ez, s, Es = self._qstats(eta, delta)
        y = self.cy
        ub = y[:, None] * (self.Zc - Ez)
        ut = s[self.cg] - y * Es
        return np.column_stack([ub, ut])

    def a_complete(self, eta, alpha, delta, pi=None):
        pi = self.pi(alpha) if pi is None else pi
        pc = pi[self.cy, self.cj, self.cg]
        if pc.min() < self.config.weight_floor:
            raise DegenerateWeight(f"availability probability {pc.min():.3g} below floor")
        return self.u_complete(eta, delta) * (self.cw / pc)[:, None]

    def b_parts(self, eta, alpha, delta, pi=None):
        """Availability-score contributions: (genotyped rows, ungenotyped rows), weighted."""
        pi = self.pi(alpha) if pi is None else pi
        pc = pi[self.cy, self.cj, self.cg]
        bc = self.Dc * (self.cw * (1.0 - pc))[:, None]
        if len(self.mi) == 0:
            return bc, np.zeros((0, self.spec.n_miss))
        theta = eta[-1]
        lin = self.Z @ eta[:-1]
        pm = pi[self.my, self.mj]
        T = (1.0 - pm) * np.exp(self.my[:, None] * lin[self.mj]) * delta[self.mj] * genetics.joint_matrix(theta)[self.mp]
        ST = T.sum(axis=1)
        if np.any(ST <= 0):
            bad = int(np.flatnonzero(ST <= 0)[0])
            if delta[self.mj[bad]].sum() == 0:
                raise PatternNotInDelta(f"covariate pattern {tuple(self.patterns[self.mj[bad]])} has no control mass")
            raise IncompatibleProxy("relative genotypes incompatible with every supported genotype")
        wgt = pm * T / ST[:, None]
        bm = -np.einsum("ng,ngq->nq", wgt, self.Dm) * self.mw[:, None]
        return bc, bm

    # -- estimating equations (sums over subjects) ---------------------------

    def eq_eta(self, eta, alpha, delta, pi=None):
        return self.a_complete(eta, alpha, delta, pi).sum(axis=0)

    def eq_alpha(self, alpha, eta, delta, pi=None):
        bc, bm = self.b_parts(eta, alpha, delta, pi)
        return bc.sum(axis=0) + bm.sum(axis=0)

    def joint(self, psi):
        k = self.spec.n_assoc + 1
        eta, alpha = psi[:k], psi[k:]
        pi = self.pi(alpha)
        d = self.delta(alpha, pi)
        return np.concatenate([self.eq_eta(eta, alpha, d, pi), self.eq_alpha(alpha, eta, d, pi)])

    # -- per-row influence pieces, on the compressed row index ---------------

    def rows_ab(self, eta, alpha, delta):
        """Unweighted per-subject (a_i, b_i) for every compressed row."""
        pi = self.pi(alpha)
        n = len(self.c.w)
        a = np.zeros((n, self.spec.n_assoc + 1))
        b = np.zeros((n, self.spec.n_miss))
        a[self.ci] = self.a_complete(eta, alpha, delta, pi) / self.cw[:, None]
        bc, bm = self.b_parts(eta, alpha, delta, pi)
        b[self.ci] = bc / self.cw[:, None]
        if len(self.mi):
            b[self.mi] = bm / self.mw[:, None]
        return a, b

    def rows_f(self, alpha, delta_raw):
        """Per-subject influence of the raw control covariate law, all J*3 cells."""
        c = self.c
        pi = self.pi(alpha)
        ctrl = c.y == 0
        n = len(c.w)
        f = np.zeros((n, self.J * 3))
        rows = np.flatnonzero(ctrl & (c.r == 1))
        pr = pi[0, c.j[rows], c.g[rows]]
        # P(G = g | Y = 0) estimated by the weighted genotype share among controls
        pg = np.bincount(c.g[rows], weights=c.w[rows] / pr, minlength=3) / self.N0
        ci = pr * pg[c.g[rows]]
        cell = c.j[rows] * 3 + c.g[rows]
        dflat = delta_raw.reshape(-1)
        if self.config.influence == "ratio":
            # I(R=1, G=g) / c_i * (I(X=x) - delta_xg), cells with matching g only
            for k, (row, g) in enumerate(zip(rows, c.g[rows])):
                idx = np.arange(self.J) * 3 + g
                f[row, idx] = -dflat[idx] / ci[k]
                f[row, cell[k]] += 1.0 / ci[k]
        else:
            f[np.flatnonzero(ctrl)] = -dflat
            f[rows, cell] += 1.0 / ci
        return f

    def free_cells(self):
        """Flat indices of the free delta cells: every pattern except the last, all genotypes."""
        return np.arange((self.J - 1) * 3)

    def delta_from_free(self, v):
        d = np.zeros((self.J, 3))
        d[:-1] = v.reshape(self.J - 1, 3)
        d[-1] = 1.0 - d[:-1].sum(axis=0)
        return d


# ---------------------------------------------------------------------------
# public operations


def _as_dataset(data, covariates=None):
    if isinstance(data, Dataset):
        return data
    records = list(data)
    if covariates is None:
        covariates = tuple(f"x{i + 1}" for i in range(len(records[0].x)))
    return Dataset.from_records(records, covariates)


def delta_unweighted(controls, covariates=None):
    """Cell-count ratios #(x, g) / #(g) among genotyped controls."""
    data = _as_dataset(controls, covariates)
    keep = (data.y == 0) & (data.r == 1)
    if np.any(data.y == 1):
        raise ValueError("delta_unweighted expects controls only")
    patterns, pat = np.unique(data.x, axis=0, return_inverse=True)
    J = len(patterns)
    num = np.bincount(pat.reshape(-1)[keep] * 3 + data.g[keep], weights=data.weight[keep], minlength=3 * J)
    num = num.reshape(J, 3)
    col = num.sum(axis=0)
    for g in G3:
        if col[g] <= 0:
            raise EmptyGenotypeStratum(f"no genotyped controls with G={g}")
    d = num[:-1] / col
    return DeltaTable(patterns, np.vstack([d, 1.0 - d.sum(axis=0)]))


def delta_weighted(controls, spec: ModelSpec, alpha, floor=1e-6):
    """Inverse-availability-weighted version of ``delta_unweighted``."""
    data = _as_dataset(controls, spec.covariates)
    if np.any(data.y == 1):
        raise ValueError("delta_weighted expects controls only")
    alpha = alpha.alpha if isinstance(alpha, MissParams) else np.asarray(alpha, dtype=float)
    prob = Problem(spec, data, FitConfig(weight_floor=floor, smooth_support=False))
    d = prob.delta(alpha)
    d = np.vstack([d[:-1], 1.0 - d[:-1].sum(axis=0)])
    return DeltaTable(prob.patterns, d)


def assoc_score(spec: ModelSpec, eta: AssocParams, delta: DeltaTable, subject: SubjectRecord):
    """Empirical-likelihood score of one genotyped subject with respect to (beta, theta)."""
    if subject.r != 1:
        raise ValueError("assoc_score needs a genotyped subject")
    P = delta.patterns
    J = len(P)
    rep = np.repeat(np.arange(J), 3)
    Z = term_matrix(spec.assoc_terms, spec.covariates, P[rep], np.tile(G3, J)).reshape(J, 3, -1)
    theta = eta.theta
    Q = delta.delta * _hwe(theta) * np.exp(Z @ eta.beta)
    S = Q.sum()
    Ez = np.tensordot(Q, Z, axes=([0, 1], [0, 1])) / S
    s = theta_score(theta)
    Es = Q.sum(axis=0) @ s / S
    z = term_matrix(spec.assoc_terms, spec.covariates, [subject.x], subject.g)[0]
    return np.append(subject.y * (z - Ez), s[subject.g] - subject.y * Es)


def log_el_term(spec: ModelSpec, eta: AssocParams, delta: DeltaTable, subject: SubjectRecord):
    """One genotyped subject's log empirical-likelihood contribution."""
    j = delta.index_of(subject.x)
    P = delta.patterns
    J = len(P)
    rep = np.repeat(np.arange(J), 3)
    Z = term_matrix(spec.assoc_terms, spec.covariates, P[rep], np.tile(G3, J)).reshape(J, 3, -1)
    hw = _hwe(eta.theta)
    lin = Z @ eta.beta
    out = np.log(hw[subject.g]) + np.log(delta.delta[j, subject.g])
    if subject.y == 1:
        out += lin[j, subject.g] - np.log(np.sum(delta.delta * hw * np.exp(lin)))
    return float(out)


def _theta_projector(config):
    lo, hi = config.theta_bounds

    def project(eta):
        eta = eta.copy()
        eta[-1] = min(max(eta[-1], lo), hi)
        return eta

    return project


def solve_eta(spec, data, alpha, delta, init: AssocParams, tol=1e-10, max_iter=50, config=None, problem=None):
    """Root of the weighted empirical-likelihood score in (beta, theta), delta held fixed."""
    config = config or FitConfig(tol=tol, max_iter=max_iter)
    prob = problem or Problem(spec, data, config)
    alpha = alpha.alpha if isinstance(alpha, MissParams) else np.asarray(alpha, dtype=float)
    d = delta.delta if isinstance(delta, DeltaTable) else delta
    pi = prob.pi(alpha)
    eta, _, _ = newton(
        lambda e: prob.eq_eta(e, alpha, d, pi),
        init.to_vector(),
        tol,
        max_iter,
        config.fd_step,
        _theta_projector(config),
        label="eta",
    )
    return AssocParams.from_vector(eta)


def miss_score_equation(spec, alpha, eta, delta, data, config=None, problem=None):
    """Availability-model estimating function summed over subjects."""
    prob = problem or Problem(spec, data, config)
    alpha = alpha.alpha if isinstance(alpha, MissParams) else np.asarray(alpha, dtype=float)
    d = delta.delta if isinstance(delta, DeltaTable) else delta
    return prob.eq_alpha(alpha, eta.to_vector(), d)


def solve_alpha(spec, data, eta: AssocParams, init, tol=1e-10, max_iter=50, config=None, problem=None):
    """Root of the availability estimating equation with delta re-estimated at every alpha."""
    config = config or FitConfig(tol=tol, max_iter=max_iter)
    prob = problem or Problem(spec, data, config)
    if len(prob.mi) == 0:
        raise CompleteSeparation("every subject is genotyped; the availability model is not identified")
    init = init.alpha if isinstance(init, MissParams) else np.asarray(init, dtype=float)
    e = eta.to_vector()

    def residual(a):
        pi = prob.pi(a)
        return prob.eq_alpha(a, e, prob.delta(a, pi), pi)

    def guard(a):
        if np.max(np.abs(a)) > config.alpha_bound:
            raise CompleteSeparation(f"availability coefficients diverged ({np.max(np.abs(a)):.1f})")
        return a

    a, _, _ = newton(residual, init, tol, max_iter, config.fd_step, guard, label="alpha")
    return MissParams(a)


def fit_fswel(spec: ModelSpec, data: Dataset, config: FitConfig | None = None):
    """Joint estimation of (beta, theta) and the availability model.

    Starts from the complete-case fit and alpha = 0, then alternates
    alpha-solve, delta update and eta-solve until the parameter change
    drops below ``config.outer_tol``.
    """
    config = config or FitConfig()
    prob = Problem(spec, data, config)
    naive = fit_mcar_naive(spec, data)
    eta = AssocParams(naive.beta_hat, min(max(naive.theta_hat, config.theta_bounds[0]), config.theta_bounds[1]))
    alpha = MissParams(np.zeros(spec.n_miss))
    trace = []
    converged = False
    for sweep in range(1, config.max_outer + 1):
        alpha_new = solve_alpha(spec, data, eta, alpha, config.tol, config.max_iter, config, prob)
        d = prob.delta(alpha_new.alpha)
        eta_new = solve_eta(spec, data, alpha_new, d, eta, config.tol, config.max_iter, config, prob)
        change = max(
            np.max(np.abs(alpha_new.alpha - alpha.alpha)),
            np.max(np.abs(eta_new.to_vector() - eta.to_vector())),
        )
        trace.append({"sweep": sweep, "change": float(change)})
        eta, alpha = eta_new, alpha_new
        if change < config.outer_tol:
            converged = True
            break
    if not converged:
        raise NonConvergence(f"alternating solver did not settle in {config.max_outer} sweeps", trace)

    psi = np.concatenate([eta.to_vector(), alpha.alpha])
    resid = prob.joint(psi)
    if config.polish and np.max(np.abs(resid)) >= config.tol:
        k = spec.n_assoc + 1
        proj = _theta_projector(config)

        def project(v):
            return np.concatenate([proj(v[:k]), v[k:]])

        psi, resid, it = newton(prob.joint, psi, config.tol, config.max_iter, config.fd_step, project, label="joint")
        trace.append({"polish_iterations": it})
        eta = AssocParams.from_vector(psi[: spec.n_assoc + 1])
        alpha = MissParams(psi[spec.n_assoc + 1 :])
    norm = float(np.max(np.abs(resid)))
    converged = norm < config.tol
    if not converged:
        raise NonConvergence(f"joint residual {norm:.3g} above tolerance", trace)

    result = FitResult(
        spec=spec,
        eta_hat=eta,
        alpha_hat=alpha,
        delta_hat=DeltaTable(prob.patterns, prob.delta(alpha.alpha)),
        cov=None,
        iterations=len([t for t in trace if "sweep" in t]),
        converged=converged,
        final_residual_norm=norm,
        trace=trace,
        diagnostics={
            "n": float(prob.N),
            "n_controls": float(prob.N0),
            "missing_without_proxy": prob.n_missing_no_proxy,
            "case_only_patterns": [list(map(float, prob.patterns[j])) for j in prob.case_only],
        },
    )
    if config.variance:
        from fswel.variance import sandwich_for_problem

        result.cov = sandwich_for_problem(prob, result)
    return result
