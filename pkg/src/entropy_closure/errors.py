"""Exception types raised across the package."""


class ClosureError(Exception):
    """Base class for all package errors."""


class DomainError(ClosureError, ValueError):
    """An argument lies outside the domain of a function (e.g. u0 <= 0)."""


class RangeError(ClosureError, OverflowError):
    """An exponent exceeded the overflow guard while building a density."""

    def __init__(self, message, node=None, sample=None):
        super().__init__(message)
        self.node = node
        self.sample = sample


class BoundaryProximityError(ClosureError):
    """The dual Hessian could not be factored even after regularization."""


class RealizabilityError(ClosureError):
    """A moment vector left the realizable set."""

    def __init__(self, message, cell=None, moment=None):
        super().__init__(message)
        self.cell = cell
        self.moment = moment


class ConvergenceError(ClosureError):
    """Newton failed inside the kinetic solver, where no fallback exists."""

    def __init__(self, message, cell=None, moment=None):
        super().__init__(message)
        self.cell = cell
        self.moment = moment


class DatasetFormatError(ClosureError, ValueError):
    """A dataset file is malformed or does not match the requested basis."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ModelFormatError(ClosureError, ValueError):
    """A model file is corrupt, of the wrong version, or mismatched."""


class SamplingError(ClosureError):
    """Rejection sampling accepted too few draws."""
