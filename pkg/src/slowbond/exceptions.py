"""Exception types raised across the package."""


class OutOfRangeDensity(ValueError):
    """A site occupation probability fell outside [0, 1]."""


class CutoffMismatch(ValueError):
    """Mode cutoffs of two objects that must be paired are incompatible."""


class SingularSystem(ArithmeticError):
    """A discretised quadratic form could not be factorised."""


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class AssertionFailure(AssertionError):
    """An in-scenario check failed.

    Carries the name of the failing metric, the observed value and the
    tolerance it was compared against.
    """

    def __init__(self, metric, value, tolerance, message=""):
        self.metric = metric
        self.value = value
        self.tolerance = tolerance
        super().__init__(message or f"{metric}={value!r} violates tolerance {tolerance!r}")
