"""Genotype probability kernels: Hardy-Weinberg frequencies, Mendelian
transmission, and the joint law of a subject's genotype with the genotypes
of relatives standing in for it.

Genotypes are minor-allele counts 0, 1, 2. Every joint table has the
subject's genotype on axis 0 and the relatives' genotypes on the remaining
axes, in the order given by ``PROXY_FIELDS``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fswel.errors import IncompatibleProxy

GENOTYPES = (0, 1, 2)

PROXY_KINDS = ("none", "spouse_child", "one_parent", "two_parents", "child_only")

# relative genotypes carried by each proxy kind, in table-axis order
PROXY_FIELDS = {
    "none": (),
    "spouse_child": ("gs", "gc"),
    "one_parent": ("gp",),
    "two_parents": ("gm", "gf"),
    "child_only": ("gc",),
}


def _transmission_tensor():
    t = np.zeros((3, 3, 3))
    for gm in GENOTYPES:
        for gf in GENOTYPES:
            pm, pf = gm / 2.0, gf / 2.0
            t[gm, gf] = [(1 - pm) * (1 - pf), pm * (1 - pf) + (1 - pm) * pf, pm * pf]
    return t


TRANSMISSION = _transmission_tensor()
TRANSMISSION.flags.writeable = False


def check_genotype(g):
    if g not in GENOTYPES:
        raise ValueError(f"genotype must be 0, 1 or 2, got {g!r}")
    return int(g)


@dataclass(frozen=True)
class FamilyProxy:
    """Observed relative genotypes for one subject.

    ``genotypes`` follows ``PROXY_FIELDS[kind]``. Mendelian compatibility is
    not checked here; ``conditional_given_family`` raises on impossible
    configurations.
    """

    kind: str = "none"
    genotypes: tuple = ()

    def __post_init__(self):
        if self.kind not in PROXY_FIELDS:
            raise ValueError(f"unknown proxy kind {self.kind!r}")
        gts = tuple(check_genotype(g) for g in self.genotypes)
        if len(gts) != len(PROXY_FIELDS[self.kind]):
            raise ValueError(
                f"{self.kind} proxy needs {len(PROXY_FIELDS[self.kind])} genotypes, got {len(gts)}"
            )
        object.__setattr__(self, "genotypes", gts)

    @classmethod
    def none(cls):
        return cls("none", ())

    @classmethod
    def spouse_child(cls, gs, gc):
        return cls("spouse_child", (gs, gc))

    @classmethod
    def one_parent(cls, gp):
        return cls("one_parent", (gp,))

    @classmethod
    def two_parents(cls, gm, gf):
        return cls("two_parents", (gm, gf))

    @classmethod
    def child_only(cls, gc):
        return cls("child_only", (gc,))

    def as_dict(self):
        return dict(zip(PROXY_FIELDS[self.kind], self.genotypes))


def hwe_probs(theta):
    """Genotype frequencies ((1-t)^2, 2t(1-t), t^2) under Hardy-Weinberg equilibrium."""
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"allele frequency must lie in [0, 1], got {theta}")
    q = 1.0 - theta
    return np.array([q * q, 2.0 * theta * q, theta * theta])


def transmission(gm, gf):
    """Offspring genotype distribution for parents with genotypes ``gm`` and ``gf``."""
    return TRANSMISSION[check_genotype(gm), check_genotype(gf)].copy()


def family_joint(theta, kind):
    """Joint probability table of (G, relatives) for a proxy kind.

    Founders are independent HWE draws with random mating; offspring follow
    Mendelian transmission.
    """
    p = hwe_probs(theta)
    if kind == "none":
        return p
    if kind == "spouse_child":
        # P(g, gs, gc) = P(g) P(gs) T(g, gs -> gc)
        return np.einsum("a,b,abc->abc", p, p, TRANSMISSION)
    if kind == "two_parents":
        # P(g, gm, gf) = P(gm) P(gf) T(gm, gf -> g)
        return np.einsum("b,c,bca->abc", p, p, TRANSMISSION)
    if kind == "one_parent":
        return family_joint(theta, "two_parents").sum(axis=2)
    if kind == "child_only":
        return family_joint(theta, "spouse_child").sum(axis=1)
    raise ValueError(f"unknown proxy kind {kind!r}")


def family_marginal(theta, proxy: FamilyProxy):
    """Probability of the observed relative genotypes, summed over the subject's genotype."""
    if proxy.kind == "none":
        raise ValueError("family_marginal needs a proxy with at least one relative")
    joint = family_joint(theta, proxy.kind)
    return float(joint[(slice(None),) + proxy.genotypes].sum())


def conditional_given_family(theta, proxy: FamilyProxy):
    """Distribution of the subject's genotype given the relatives' genotypes."""
    if proxy.kind == "none":
        raise ValueError("conditional_given_family needs a proxy with at least one relative")
    col = family_joint(theta, proxy.kind)[(slice(None),) + proxy.genotypes]
    total = col.sum()
    if total <= 0.0:
        raise IncompatibleProxy(f"{proxy.kind} genotypes {proxy.genotypes} are Mendelian-incompatible")
    return col / total


# Flat enumeration of every proxy configuration, used to vectorize lookups.
PROXY_CONFIGS = [
    (kind, gts)
    for kind in PROXY_KINDS
    for gts in np.ndindex(*(3,) * len(PROXY_FIELDS[kind]))
]
PROXY_INDEX = {cfg: i for i, cfg in enumerate(PROXY_CONFIGS)}


def proxy_code(proxy: FamilyProxy):
    return PROXY_INDEX[(proxy.kind, proxy.genotypes)]


def joint_matrix(theta):
    """(n_configs, 3) array whose row c holds P(G=g, proxy config c)."""
    rows = []
    for kind in PROXY_KINDS:
        table = family_joint(theta, kind)
        rows.append(table.reshape(3, -1).T)
    return np.vstack(rows)


def compatible_mask():
    """Boolean per proxy config: True when some subject genotype has positive mass."""
    return joint_matrix(0.5).sum(axis=1) > 0
