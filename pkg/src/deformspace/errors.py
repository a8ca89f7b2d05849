"""Exception hierarchy shared by all deformspace modules."""


class DeformspaceError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DeformspaceError):
    """An argument violates a documented precondition."""


class DegenerateInputError(InvalidInputError):
    """Geometric input is degenerate (collinear, duplicate, zero-area...)."""


class OutsideDomainError(DeformspaceError):
    """A query point lies outside the exploration space hull."""


class TrainingDivergedError(DeformspaceError):
    """An optimization produced non-finite values.

    Carries the iteration index at which divergence was detected, when known.
    """

    def __init__(self, message, iteration=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace


class NumericalError(DeformspaceError):
    """A linear solve or similar numerical routine failed or is unreliable."""


class BundleError(DeformspaceError):
    """A space bundle is missing, corrupted, or has an unsupported schema."""
