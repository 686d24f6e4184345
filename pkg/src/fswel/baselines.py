"""Reference estimators: complete-case logistic regression (MCAR), inverse
probability weighting under a genotype-free availability model (MAR), and
the matching minor-allele-frequency estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from fswel.data import Dataset, compress
from fswel.errors import CompleteSeparation, DegenerateWeight, EmptyControls, NonConvergence
from fswel.model import ModelSpec, term_matrix

SEPARATION_BOUND = 15.0


@dataclass
class LogisticFit:
    coef: np.ndarray
    cov: np.ndarray
    iterations: int


def fit_logistic(X, y, weights=None, tol=1e-10, max_iter=100):
    """Weighted logistic regression by IRLS with step halving.

    Returns coefficients and the inverse weighted information matrix.
    Raises CompleteSeparation when a coefficient exceeds 15 in absolute value.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    beta = np.zeros(X.shape[1])

    def loglik(b):
        eta = X @ b
        return np.sum(w * (y * eta - np.logaddexp(0.0, eta)))

    ll = loglik(beta)
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        score = X.T @ (w * (y - p))
        info = (X * (w * p * (1 - p))[:, None]).T @ X
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise CompleteSeparation("singular information matrix in logistic fit")
        lam = 1.0
        while True:
            cand = beta + lam * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12 * abs(ll) or lam < 1e-10:
                break
            lam /= 2
        beta, ll = cand, ll_new
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise CompleteSeparation(f"coefficient norm diverged ({np.max(np.abs(beta)):.1f})")
        if np.max(np.abs(lam * step)) < tol:
            break
    else:
        raise NonConvergence(f"IRLS did not converge in {max_iter} iterations")
    p = expit(X @ beta)
    info = (X * (w * p * (1 - p))[:, None]).T @ X
    return LogisticFit(beta, np.linalg.inv(info), it)


@dataclass
class BaselineResult:
    method: str
    beta_hat: np.ndarray
    theta_hat: float
    std_errors: np.ndarray
    weights_used: bool

    def estimates(self):
        return np.append(self.beta_hat, self.theta_hat)


def maf_naive(g, weights=None):
    """Allele counting among genotyped controls: (2 n2 + n1) / (2 n0) and its binomial SE."""
    g = np.asarray(g, dtype=float)
    w = np.ones(len(g)) if weights is None else np.asarray(weights, dtype=float)
    n0 = w.sum()
    if n0 <= 0:
        raise EmptyControls("no genotyped controls")
    theta = float((w * g).sum() / (2 * n0))
    return theta, float(np.sqrt(theta * (1 - theta) / (2 * n0)))


def maf_mar(g, inv_prob, weights=None):
    """Allele frequency among genotyped controls, each weighted by 1/P(R=1 | Y=0, X)."""
    g = np.asarray(g, dtype=float)
    v = np.asarray(inv_prob, dtype=float)
    if weights is not None:
        v = v * np.asarray(weights, dtype=float)
    if v.sum() <= 0:
        raise EmptyControls("no genotyped controls")
    return float((v * g).sum() / (2 * v.sum()))


def _complete_rows(spec, data):
    c = compress(data)
    keep = c.r == 1
    X = np.column_stack([np.ones(keep.sum()), term_matrix(spec.assoc_terms, spec.covariates, c.patterns[c.j[keep]], c.g[keep])])
    return c, keep, X


def fit_mcar_naive(spec: ModelSpec, data: Dataset):
    """Association model fitted to complete observations only."""
    c, keep, X = _complete_rows(spec, data)
    y = c.y[keep]
    if not (np.any(y == 1) and np.any(y == 0)):
        raise EmptyControls("complete observations are needed in both outcome groups")
    fit = fit_logistic(X, y, c.w[keep])
    ctrl = y == 0
    theta, theta_se = maf_naive(c.g[keep][ctrl], c.w[keep][ctrl])
    se = np.append(np.sqrt(np.diag(fit.cov))[1:], theta_se)
    return BaselineResult("MCAR", fit.coef[1:], theta, se, False)


def availability_model(spec: ModelSpec, data: Dataset):
    """Fit the genotype-free availability model; returns (LogisticFit, compressed data, P(R=1) per row)."""
    c = compress(data)
    D = term_matrix(spec.mar_terms, spec.covariates, c.patterns[c.j], 0.0, c.y)
    rows = c.y == 0 if spec.controls_only else np.ones(len(c.y), bool)
    fit = fit_logistic(D[rows], c.r[rows], c.w[rows])
    prob = expit(D @ fit.coef)
    if spec.controls_only:
        prob = np.where(c.y == 1, 1.0, prob)
    return fit, c, prob


def fit_mar_ipw(spec: ModelSpec, data: Dataset, floor=1e-6):
    """Complete observations weighted by the inverse of a genotype-free availability probability."""
    _, c, prob = availability_model(spec, data)
    keep = c.r == 1
    if np.any(prob[keep] < floor):
        raise DegenerateWeight(f"availability probability below {floor}")
    X = np.column_stack([np.ones(keep.sum()), term_matrix(spec.assoc_terms, spec.covariates, c.patterns[c.j[keep]], c.g[keep])])
    wts = c.w[keep] / prob[keep]
    fit = fit_logistic(X, c.y[keep], wts)
    ctrl = c.y[keep] == 0
    theta = maf_mar(c.g[keep][ctrl], 1.0 / prob[keep][ctrl], c.w[keep][ctrl])
    n0 = c.w[keep][ctrl].sum()
    se = np.append(np.sqrt(np.diag(fit.cov))[1:], np.sqrt(theta * (1 - theta) / (2 * n0)))
    return BaselineResult("MAR", fit.coef[1:], theta, se, True)
