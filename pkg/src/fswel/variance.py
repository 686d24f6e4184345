"""Sandwich covariance for the joint (eta, alpha) estimator and Wald summaries.

The bread ``M`` is the Jacobian of the averaged estimating functions, with
the dependence of the control covariate law on alpha carried through. The
meat ``V`` adds, for controls, the influence of that covariate law mapped
through its Jacobians ``C3`` (association score) and ``D3`` (availability
score); ``p0`` is the control fraction N0 / N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from fswel.errors import SingularM
from fswel.estimator import FitConfig, FitResult, Problem, apply_plan, fd_jacobian

Z975 = norm.ppf(0.975)


@dataclass
class SandwichComponents:
    M: np.ndarray
    V: np.ndarray
    C3: np.ndarray
    D3: np.ndarray
    a: np.ndarray
    b: np.ndarray
    f: np.ndarray
    w: np.ndarray
    control: np.ndarray
    p0: float
    N: float


def _wcov(X, Y, w):
    sw = w.sum()
    xm = (w @ X) / sw
    ym = (w @ Y) / sw
    return ((X - xm) * w[:, None]).T @ (Y - ym) / sw


def components(prob: Problem, fit: FitResult):
    k = prob.spec.n_assoc + 1
    psi = fit.estimates()
    eta, alpha = psi[:k], psi[k:]
    N = prob.N
    step = prob.config.fd_step

    M = fd_jacobian(lambda v: prob.joint(v) / N, psi, step)

    raw = prob.delta(alpha, smooth=False)
    pi = prob.pi(alpha)

    def at_delta(v):
        d = prob.delta_from_free(v)
        if prob.plan is not None:
            d = apply_plan(d, prob.plan)
        return np.concatenate([prob.eq_eta(eta, alpha, d, pi), prob.eq_alpha(alpha, eta, d, pi)]) / N

    free = raw[:-1].reshape(-1)
    K = fd_jacobian(at_delta, free, step)

    smoothed = apply_plan(raw, prob.plan) if prob.plan is not None else raw
    a, b = prob.rows_ab(eta, alpha, smoothed)
    f = prob.rows_f(alpha, raw)[:, prob.free_cells()]
    w = prob.c.w
    control = prob.c.y == 0
    p0 = prob.N0 / N

    ab = np.hstack([a, b])
    Kf = f @ K.T
    V = _wcov(ab, ab, w)
    wc = w[control]
    ab0, Kf0 = ab[control], Kf[control]
    cross = _wcov(ab0, Kf0, wc)
    V = V + _wcov(Kf0, Kf0, wc) / p0 + cross + cross.T
    V = (V + V.T) / 2
    return SandwichComponents(M, V, K[:k], K[k:], a, b, f, w, control, p0, N)


def sandwich_cov(M, V, N):
    """M^{-1} V M^{-T} / N."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e12:
        raise SingularM("bread matrix is numerically singular")
    Minv = np.linalg.inv(M)
    cov = Minv @ V @ Minv.T / N
    return (cov + cov.T) / 2


def sandwich_for_problem(prob: Problem, fit: FitResult):
    comp = components(prob, fit)
    return sandwich_cov(comp.M, comp.V, comp.N)


def compute_M(fit: FitResult, data, spec=None, config=None):
    prob = Problem(spec or fit.spec, data, config or FitConfig())
    return components(prob, fit).M


def compute_V(fit: FitResult, data, spec=None, config=None):
    prob = Problem(spec or fit.spec, data, config or FitConfig())
    return components(prob, fit).V


@dataclass
class WaldSummary:
    name: str
    estimate: float
    std_error: float
    z: float
    p_one_sided: float
    p_two_sided: float
    ci_lower: float
    ci_upper: float


def wald_test(estimate, std_error, name=""):
    z = estimate / std_error if std_error > 0 else (0.0 if estimate == 0 else np.copysign(np.inf, estimate))
    return WaldSummary(
        name=name,
        estimate=float(estimate),
        std_error=float(std_error),
        z=float(z),
        p_one_sided=float(norm.sf(abs(z))),
        p_two_sided=float(min(1.0, 2 * norm.sf(abs(z)))),
        ci_lower=float(estimate - Z975 * std_error),
        ci_upper=float(estimate + Z975 * std_error),
    )


def wald(fit: FitResult):
    """Wald summaries for every estimated parameter."""
    return [wald_test(e, s, n) for n, e, s in zip(fit.names, fit.estimates(), fit.std_errors())]


def jackknife_se(spec, data, config=None):
    """Delete-one jackknife standard errors of (eta, alpha).

    Subjects sharing a compressed row give identical leave-one-out fits, so
    one refit per distinct row suffices.
    """
    from fswel.estimator import fit_fswel

    config = config or FitConfig()
    quiet = FitConfig(**{**config.__dict__, "variance": False})
    # map subjects to compressed rows
    proxy = np.where(data.r == 1, 0, data.proxy)
    _, pat = np.unique(data.x, axis=0, return_inverse=True)
    key = np.column_stack([data.y, pat.reshape(-1), data.r, data.g, proxy])
    rows, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    ests = []
    mult = []
    for r in range(len(rows)):
        first = int(np.flatnonzero(inv == r)[0])
        w = data.weight.copy()
        w[first] -= 1.0
        keep = w > 0
        sub = data.with_weights(w).take(keep)
        ests.append(fit_fswel(spec, sub, quiet).estimates())
        mult.append(data.weight[inv == r].sum())
    ests = np.array(ests)
    mult = np.array(mult)
    n = mult.sum()
    mean = mult @ ests / n
    var = (n - 1) / n * (mult @ (ests - mean) ** 2)
    return np.sqrt(var)
