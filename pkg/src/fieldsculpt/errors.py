"""Exception types shared across the package."""


class SculptError(Exception):
    """Base class for numerical/physics failures."""


class TruncationError(SculptError):
    """The Fock-space truncation is too small for the requested operation."""

    def __init__(self, message, required_n_max=None):
        super().__init__(message)
        self.required_n_max = required_n_max


class InvalidStateError(SculptError, ValueError):
    """A state vector is malformed (zero norm, wrong shape, non-finite)."""


class ZeroProbabilityError(SculptError):
    """A detection branch has (numerically) vanishing probability."""
