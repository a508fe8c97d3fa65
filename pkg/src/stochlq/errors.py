"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError`, configuration
problems from :class:`ConfigError`.  Instability gets its own branch
because the CLI maps it to a distinct exit code.
"""


class StochLQError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(StochLQError):
    pass


class ShapeMismatch(NumericalError, ValueError):
    pass


class NotSymmetric(NumericalError, ValueError):
    pass


class SingularSystem(NumericalError):
    pass


class QuasiRNotPD(NumericalError):
    """``R + B'PB + sigma^2 D'PD`` is not positive definite."""


class RankDeficient(NumericalError):
    """The policy-evaluation regression cannot identify every entry of P."""


class SingularGram(NumericalError):
    pass


class MaxItersExceeded(NumericalError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InstabilityError(StochLQError):
    pass


class NotStable(InstabilityError):
    """A closed loop handed to the Lyapunov solver is not mean-square stable."""


class NotStabilizing(InstabilityError):
    """A feedback gain fails the mean-square stability check."""


class DivergenceError(NotStabilizing):
    """A simulated rollout exceeded the divergence bound."""


class IllConditionedWarning(RuntimeWarning):
    pass


class ConfigError(StochLQError):
    pass


class ParseError(ConfigError):
    pass


class MissingField(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass
