"""Exception hierarchy shared by all dlse modules."""


class DlseError(Exception):
    """Base class. ``details`` carries machine-readable context."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class DimensionError(DlseError, ValueError):
    pass


class NonFiniteError(DlseError, ValueError):
    pass


class DataError(DlseError, ValueError):
    """Malformed or degenerate input data (files, datasets, specs)."""


class NumericalError(DlseError, ArithmeticError):
    """A numerical procedure failed (non-finite loss, out-of-range scores, ...)."""


class RationalizationError(NumericalError):
    pass
