"""Exception hierarchy shared across the package.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class BqnnError(Exception):
    """Base class for all package errors."""


class ValidationError(BqnnError, ValueError):
    """Malformed input, out-of-range argument, or inconsistent shapes."""


class NumericalError(BqnnError, ArithmeticError):
    """A numerical procedure failed to produce a usable result."""


class NonConvergenceError(NumericalError):
    def __init__(self, message, iterations=None, last_iterate=None, max_mismatch=None):
        super().__init__(message)
        self.iterations = iterations
        self.last_iterate = last_iterate
        self.max_mismatch = max_mismatch


class SingularJacobianError(NumericalError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DivergenceError(NumericalError):
    def __init__(self, message, epoch=None, diagnostics=None):
        super().__init__(message)
        self.epoch = epoch
        self.diagnostics = diagnostics or {}


class RedrawRateError(NumericalError):
    """Too many scenario draws failed to converge."""
