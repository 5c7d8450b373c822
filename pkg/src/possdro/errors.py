"""Exception types raised across the package."""


class PossdroError(Exception):
    """Base class for package errors."""


class ModelError(PossdroError, ValueError):
    """Invalid model data (violated invariant, dimension mismatch, bad parameter)."""


class SolverError(PossdroError):
    """A solver could not return an optimal answer."""

    def __init__(self, message, outcome=None):
        super().__init__(message)
        self.outcome = outcome


class CertificationError(SolverError):
    """Primal and dual bounds did not meet within the requested tolerance."""

    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper
