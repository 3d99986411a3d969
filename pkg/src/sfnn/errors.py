"""Exception hierarchy shared by the solver modules and the CLI."""

from __future__ import annotations


class SFNNError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SFNNError, ValueError):
    pass


class DimensionError(SFNNError, ValueError):
    pass


class DomainError(SFNNError, ValueError):
    pass


class NonContractiveError(SFNNError, ValueError):
    pass


class EstimationError(SFNNError, ValueError):
    pass


class DivergenceError(SFNNError, ArithmeticError):
    """Iteration produced non-finite values or blew past the divergence cap.

    The partial :class:`~sfnn.fixed_point.IterationTrace` is attached as
    ``trace`` so callers can inspect how far the run got.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class TrainingError(SFNNError, ArithmeticError):
    """Non-finite loss or gradient during kernel training (``state`` is a snapshot)."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
