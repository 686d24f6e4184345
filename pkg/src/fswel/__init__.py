"""Family-supplemented weighted empirical likelihood for case-control
association studies with genotype-dependent missingness."""

__version__ = "0.1.0"

from fswel.errors import (
    CompleteSeparation,
    DegenerateWeight,
    EmptyGenotypeStratum,
    FswelError,
    IncompatibleProxy,
    InvariantViolation,
    NoAdjacentPattern,
    NonConvergence,
    PatternNotInDelta,
    SchemaError,
    SingularJacobian,
    SingularM,
)
from fswel.genetics import FamilyProxy, hwe_probs
from fswel.model import AssocParams, MissParams, ModelSpec
from fswel.data import Dataset, SubjectRecord
from fswel.estimator import FitConfig, FitResult, fit_fswel
from fswel.baselines import fit_mar_ipw, fit_mcar_naive

__all__ = [
    "AssocParams",
    "CompleteSeparation",
    "Dataset",
    "DegenerateWeight",
    "EmptyGenotypeStratum",
    "FamilyProxy",
    "FitConfig",
    "FitResult",
    "FswelError",
    "IncompatibleProxy",
    "InvariantViolation",
    "MissParams",
    "ModelSpec",
    "NoAdjacentPattern",
    "NonConvergence",
    "PatternNotInDelta",
    "SchemaError",
    "SingularJacobian",
    "SingularM",
    "SubjectRecord",
    "fit_fswel",
    "fit_mar_ipw",
    "fit_mcar_naive",
    "hwe_probs",
]
