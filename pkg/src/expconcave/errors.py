"""Exception hierarchy shared by every module of the package."""


class ExpConcaveError(Exception):
    """Base class for all library errors."""


class InvalidInputError(ExpConcaveError, ValueError):
    """An argument is malformed, non-finite, or outside its allowed range."""


class PreconditionError(ExpConcaveError, ValueError):
    """A formula or algorithm was called outside the regime where it is defined."""


class UnsupportedDimensionError(ExpConcaveError, ValueError):
    """The requested operation does not scale to this dimension."""


class ConvergenceError(ExpConcaveError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The final residual (projected-gradient norm) is kept on ``residual``.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class BaseLearnerError(ExpConcaveError, RuntimeError):
    """A base learner failed inside a boosting run; ``batch`` is its phase-I index."""

    def __init__(self, batch, cause):
        super().__init__(f"base learner failed on phase-I batch {batch}: {cause}")
        self.batch = batch
        self.cause = cause
