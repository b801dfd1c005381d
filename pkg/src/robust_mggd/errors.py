"""Exception hierarchy shared by all modules."""


class RobustMggdError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RobustMggdError):
    """Malformed input: wrong shape, non-finite entries, bad argument combos."""


class SingularMatrixError(RobustMggdError):
    """A matrix required to be positive definite is (numerically) singular.

    Carries the offending eigenvalue when known.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class ConvergenceError(RobustMggdError):
    """An iterative routine hit its iteration cap without converging.

    ``last_estimate`` holds the best value reached, when meaningful.
    """

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class DegenerateSampleError(RobustMggdError):
    """A sample coincides with the current mean; carries the sample index."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DivergenceError(RobustMggdError):
    """The solver produced a non-finite iterate; carries the iteration index."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(RobustMggdError):
    """Invalid solver/experiment configuration or config file."""


class ReportIOError(RobustMggdError):
    """I/O failure while reading or writing an artifact; carries the path."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
