"""Model specification and linear predictors for the association and
missingness logistic models.

Terms are written as strings. A term is a product of factors joined by
``:``; the factors are ``1`` (intercept), ``G`` (genotype), ``Y`` (outcome)
or the name of a covariate column. ``"x:G"`` is a covariate-by-genotype
interaction, ``"Y:G"`` an outcome-by-genotype interaction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

INTERCEPT = "1"


def _factors(term):
    return tuple(term.split(":"))


@dataclass(frozen=True)
class ModelSpec:
    covariates: tuple
    assoc_terms: tuple
    miss_terms: tuple
    controls_only: bool = False
    # missingness model for the MAR baseline; defaults to the G-free miss terms
    mar_terms: tuple = None

    def __post_init__(self):
        for name in ("covariates", "assoc_terms", "miss_terms"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if INTERCEPT in self.miss_terms:
            object.__setattr__(
                self, "miss_terms", (INTERCEPT,) + tuple(t for t in self.miss_terms if t != INTERCEPT)
            )
        if self.mar_terms is None:
            object.__setattr__(
                self, "mar_terms", tuple(t for t in self.miss_terms if "G" not in _factors(t))
            )
        else:
            object.__setattr__(self, "mar_terms", tuple(self.mar_terms))
        self._validate()

    def _validate(self):
        known = set(self.covariates)
        if len(set(self.covariates)) != len(self.covariates):
            raise ValueError("duplicate covariate names")
        for label, terms, allowed in (
            ("assoc_terms", self.assoc_terms, known | {"G"}),
            ("miss_terms", self.miss_terms, known | {"G", "Y", INTERCEPT}),
            ("mar_terms", self.mar_terms, known | {"Y", INTERCEPT}),
        ):
            if len(set(terms)) != len(terms):
                raise ValueError(f"{label} contains duplicates")
            for t in terms:
                for f in _factors(t):
                    if f not in allowed:
                        raise ValueError(f"{label}: term {t!r} references unknown factor {f!r}")
        if INTERCEPT in self.assoc_terms:
            raise ValueError("the association model intercept is not estimable; leave it out")
        if not self.assoc_terms:
            raise ValueError("association model needs at least one term")
        if INTERCEPT not in self.miss_terms:
            raise ValueError("miss_terms must include the intercept '1'")
        if self.controls_only and any("Y" in _factors(t) for t in self.miss_terms):
            raise ValueError("controls-only missingness model cannot contain Y terms")

    @classmethod
    def log_additive(cls, covariates, interactions=(), miss_terms=None, controls_only=False, mar_terms=None):
        """Main effects of every covariate and of G, plus ``x:G`` for each covariate in ``interactions``."""
        covariates = tuple(covariates)
        assoc = covariates + ("G",) + tuple(f"{c}:G" for c in interactions)
        if miss_terms is None:
            miss_terms = (INTERCEPT,) + (() if controls_only else ("Y",)) + covariates + ("G",)
        return cls(covariates, assoc, miss_terms, controls_only, mar_terms)

    @property
    def n_assoc(self):
        return len(self.assoc_terms)

    @property
    def n_miss(self):
        return len(self.miss_terms)

    @property
    def genetic_mask(self):
        """True for association terms that involve G (the beta2 block)."""
        return np.array(["G" in _factors(t) for t in self.assoc_terms])

    @property
    def eta_names(self):
        return list(self.assoc_terms) + ["theta"]

    @property
    def alpha_names(self):
        return [f"alpha[{t}]" for t in self.miss_terms]

    def to_dict(self):
        return {
            "covariates": list(self.covariates),
            "assoc_terms": list(self.assoc_terms),
            "miss_terms": list(self.miss_terms),
            "mar_terms": list(self.mar_terms),
            "controls_only": self.controls_only,
        }


def term_matrix(terms, covariates, x, g, y=None):
    """Evaluate terms row-wise.

    ``x`` is (n, k); ``g`` and ``y`` broadcast to length n. Returns (n, len(terms)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    g = np.broadcast_to(np.asarray(g, dtype=float), (n,))
    col = {c: x[:, i] for i, c in enumerate(covariates)}
    col["G"] = g
    col[INTERCEPT] = np.ones(n)
    if y is not None:
        col["Y"] = np.broadcast_to(np.asarray(y, dtype=float), (n,))
    out = np.empty((n, len(terms)))
    for k, t in enumerate(terms):
        v = np.ones(n)
        for f in _factors(t):
            v = v * col[f]
        out[:, k] = v
    return out


@dataclass
class AssocParams:
    beta: np.ndarray
    theta: float

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).copy()
        self.theta = float(self.theta)

    @classmethod
    def from_vector(cls, eta):
        eta = np.asarray(eta, dtype=float)
        return cls(eta[:-1], eta[-1])

    def to_vector(self):
        return np.append(self.beta, self.theta)

    def beta1(self, spec: ModelSpec):
        return self.beta[~spec.genetic_mask]

    def beta2(self, spec: ModelSpec):
        return self.beta[spec.genetic_mask]


@dataclass
class MissParams:
    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).copy()


def _check(spec, beta=None, alpha=None):
    if beta is not None and len(beta) != spec.n_assoc:
        raise ValueError(f"expected {spec.n_assoc} association coefficients, got {len(beta)}")
    if alpha is not None and len(alpha) != spec.n_miss:
        raise ValueError(f"expected {spec.n_miss} missingness coefficients, got {len(alpha)}")


def assoc_design(spec: ModelSpec, x, g):
    return term_matrix(spec.assoc_terms, spec.covariates, x, g)


def assoc_linpred(spec: ModelSpec, params: AssocParams, x, g):
    """f_beta(x, g) for a single subject."""
    _check(spec, beta=params.beta)
    return float(assoc_design(spec, x, g)[0] @ params.beta)


def miss_design(spec: ModelSpec, y, x, g):
    """Missingness design vector, intercept first, terms in spec order."""
    return term_matrix(spec.miss_terms, spec.covariates, x, g, y)[0]


def miss_prob(spec: ModelSpec, alpha, y, x, g):
    """P(R=1 | y, x, g) under the logistic missingness model."""
    alpha = alpha.alpha if isinstance(alpha, MissParams) else np.asarray(alpha, dtype=float)
    _check(spec, alpha=alpha)
    return float(expit(miss_design(spec, y, x, g) @ alpha))
