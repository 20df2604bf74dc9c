"""Exception hierarchy.

CLI exit-code convention: ConfigError -> 2, every other ArScatterError -> 3.
"""


class ArScatterError(Exception):
    """Base class for all library errors."""


class ConfigError(ArScatterError):
    """Invalid configuration, CLI arguments or input file."""


class NumericalError(ArScatterError):
    """Base class for numerical failures raised during computation."""


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive definite is not."""


class NoConvergence(NumericalError):
    """An iterative procedure exhausted its iteration budget."""


class DimensionMismatch(NumericalError, ValueError):
    """Operands have incompatible shapes."""


class DegenerateCovariance(NumericalError):
    """A covariance sequence or matrix is singular or not positive definite."""


class ZeroEnergy(NumericalError):
    """All prediction-error terms vanish; reflection estimate undefined."""


class DomainError(NumericalError, ValueError):
    """Scalar argument outside the function domain."""


class RankDeficient(NumericalError):
    """Sample does not span enough dimensions for the requested estimate."""


class SingularScatter(NumericalError):
    """Scatter matrix cannot be inverted by a detector."""


class WindowTooLarge(NumericalError, ValueError):
    """CFAR reference window does not fit the data extent."""


class InsufficientTrials(NumericalError, ValueError):
    """Too few Monte-Carlo trials for the requested quantile."""
