"""Exception hierarchy shared across the package.

``ValidationError`` subclasses signal bad inputs (CLI exit code 1), including
unreadable or incompatible checkpoints; everything else deriving from
``SkimError`` is a runtime failure (exit code 2).
"""


class SkimError(Exception):
    pass


class ValidationError(SkimError, ValueError):
    pass


class DimensionError(ValidationError):
    pass


class AllMaskedRowError(SkimError, ValueError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"attention row {row} has no allowed entries")


class UndefinedLossError(SkimError, ValueError):
    pass


class NonFiniteError(SkimError, FloatingPointError):
    pass


class CheckpointError(ValidationError):
    pass
