"""Subject records and the columnar dataset the estimators work on."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fswel.errors import InvariantViolation
from fswel.genetics import PROXY_CONFIGS, FamilyProxy, proxy_code

MISSING_G = -1


@dataclass(frozen=True)
class SubjectRecord:
    y: int
    x: tuple
    r: int
    g: int | None = None
    family: FamilyProxy = field(default_factory=FamilyProxy.none)
    id: str | None = None
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if self.y not in (0, 1) or self.r not in (0, 1):
            raise InvariantViolation("y and r must be 0 or 1", row=self.id)
        if self.r == 1 and self.g is None:
            raise InvariantViolation("r=1 requires a genotype", row=self.id)
        if self.r == 0 and self.g is not None:
            raise InvariantViolation("genotype present although r=0", row=self.id)
        if self.g is not None and self.g not in (0, 1, 2):
            raise InvariantViolation(f"genotype {self.g!r} not in 0, 1, 2", row=self.id)
        if not np.all(np.isfinite(self.x)):
            raise InvariantViolation("non-finite covariate value", row=self.id)
        if not self.weight > 0:
            raise InvariantViolation("weights must be positive", row=self.id)


@dataclass
class Dataset:
    """Column arrays for a case-control sample.

    ``g`` holds -1 where the genotype is unavailable; ``proxy`` holds the
    flat proxy-configuration code (see ``genetics.PROXY_CONFIGS``).
    ``weight`` is a frequency weight, 1 for ordinary subject-level data.
    """

    covariates: tuple
    y: np.ndarray
    x: np.ndarray
    r: np.ndarray
    g: np.ndarray
    proxy: np.ndarray
    weight: np.ndarray = None
    ids: list = None

    def __post_init__(self):
        self.covariates = tuple(self.covariates)
        self.y = np.asarray(self.y, dtype=np.int64)
        n = len(self.y)
        self.x = np.asarray(self.x, dtype=float).reshape(n, len(self.covariates))
        self.r = np.asarray(self.r, dtype=np.int64)
        self.g = np.asarray(self.g, dtype=np.int64)
        self.proxy = np.asarray(self.proxy, dtype=np.int64)
        self.weight = np.ones(n) if self.weight is None else np.asarray(self.weight, dtype=float)
        if self.ids is None:
            self.ids = [str(i + 1) for i in range(n)]
        bad = (self.r == 1) != (self.g >= 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise InvariantViolation("genotype must be present iff r=1", row=self.ids[i])

    @classmethod
    def from_records(cls, records, covariates):
        records = list(records)
        k = len(covariates)
        for rec in records:
            if len(rec.x) != k:
                raise InvariantViolation(f"expected {k} covariates, got {len(rec.x)}", row=rec.id)
        return cls(
            covariates=covariates,
            y=[rec.y for rec in records],
            x=np.array([rec.x for rec in records], dtype=float).reshape(len(records), k),
            r=[rec.r for rec in records],
            g=[MISSING_G if rec.g is None else rec.g for rec in records],
            proxy=[proxy_code(rec.family) for rec in records],
            weight=[rec.weight for rec in records],
            ids=[rec.id if rec.id is not None else str(i + 1) for i, rec in enumerate(records)],
        )

    def records(self):
        out = []
        for i in range(len(self)):
            kind, gts = PROXY_CONFIGS[self.proxy[i]]
            out.append(
                SubjectRecord(
                    y=int(self.y[i]),
                    x=tuple(self.x[i]),
                    r=int(self.r[i]),
                    g=None if self.g[i] < 0 else int(self.g[i]),
                    family=FamilyProxy(kind, gts),
                    id=self.ids[i],
                    weight=float(self.weight[i]),
                )
            )
        return out

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        idx = np.asarray(idx)
        return Dataset(
            self.covariates,
            self.y[idx],
            self.x[idx],
            self.r[idx],
            self.g[idx],
            self.proxy[idx],
            self.weight[idx],
            [self.ids[i] for i in np.arange(len(self))[idx]],
        )

    def with_weights(self, weight):
        return Dataset(self.covariates, self.y, self.x, self.r, self.g, self.proxy, weight, self.ids)

    @property
    def proxy_kinds(self):
        return np.array([PROXY_CONFIGS[c][0] for c in self.proxy])

    def summary(self):
        """Counts used in the ingestion report."""
        w = self.weight
        kinds = self.proxy_kinds
        miss = self.r == 0
        return {
            "n": float(w.sum()),
            "cases": float(w[self.y == 1].sum()),
            "controls": float(w[self.y == 0].sum()),
            "complete_cases": float(w[(self.y == 1) & ~miss].sum()),
            "complete_controls": float(w[(self.y == 0) & ~miss].sum()),
            "missing_rate": float(w[miss].sum() / w.sum()) if len(w) else float("nan"),
            "missing_by_proxy": {
                k: float(w[miss & (kinds == k)].sum()) for k in sorted(set(kinds[miss]))
            },
            "missing_without_proxy": float(w[miss & (kinds == "none")].sum()),
        }


@dataclass
class Compressed:
    """Distinct (y, pattern, r, g, proxy) rows with summed frequency weights.

    Covariate patterns are the distinct rows of ``x`` in lexicographic order,
    so pattern ids do not depend on subject order.
    """

    patterns: np.ndarray
    y: np.ndarray
    j: np.ndarray
    r: np.ndarray
    g: np.ndarray
    proxy: np.ndarray
    w: np.ndarray


def compress(data: Dataset) -> Compressed:
    patterns, pat = np.unique(data.x, axis=0, return_inverse=True)
    pat = pat.reshape(-1)
    # proxies carry no information for genotyped subjects
    proxy = np.where(data.r == 1, 0, data.proxy)
    key = np.column_stack([data.y, pat, data.r, data.g, proxy])
    rows, inv = np.unique(key, axis=0, return_inverse=True)
    w = np.bincount(inv.reshape(-1), weights=data.weight, minlength=len(rows))
    return Compressed(
        patterns=patterns,
        y=rows[:, 0],
        j=rows[:, 1],
        r=rows[:, 2],
        g=rows[:, 3],
        proxy=rows[:, 4],
        w=w,
    )
