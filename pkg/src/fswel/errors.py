"""Exception hierarchy. Every error raised on purpose derives from FswelError."""


class FswelError(Exception):
    pass


class IncompatibleProxy(FswelError):
    """Family genotypes that no subject genotype can produce under Mendelian transmission."""


class EmptyGenotypeStratum(FswelError):
    """A genotype value has no complete controls, so its covariate law cannot be estimated."""


class DegenerateWeight(FswelError):
    """An availability probability fell below the configured floor."""


class PatternNotInDelta(FswelError):
    pass


class NoAdjacentPattern(FswelError):
    pass


class NonConvergence(FswelError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SingularJacobian(FswelError):
    pass


class SingularM(FswelError):
    pass


class CompleteSeparation(FswelError):
    pass


class SchemaError(FswelError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class InvariantViolation(FswelError):
    def __init__(self, message, row=None):
        super().__init__(f"{message} (row {row})" if row is not None else message)
        self.row = row


class InsufficientStratum(FswelError):
    pass


class EmptyControls(FswelError):
    pass
