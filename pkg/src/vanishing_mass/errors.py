"""Exception types shared across the package."""

from __future__ import annotations


class InputError(ValueError):
    """Malformed or non-finite user input."""


class PreconditionError(ValueError):
    """An operation was called outside its domain of validity."""


class InfeasibleError(RuntimeError):
    """A linear program has no feasible point.

    Attributes
    ----------
    certificate : numpy.ndarray
        Farkas vector ``y`` with ``A^T y <= 0`` and ``b^T y > 0`` for the
        original equality system ``A x = b, x >= 0``.
    """

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class UnbalancedLoadError(ValueError):
    """Loads do not annihilate rigid motions."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
