"""Exception hierarchy for singflow."""


class SingflowError(Exception):
    """Base class for all library errors."""


class DomainError(SingflowError, ValueError):
    """Argument outside the domain of an operation."""


class SingularityError(DomainError):
    """Evaluation of the singular field at the origin."""


class ProjectionPoleError(DomainError):
    """Stereographic projection evaluated at its pole."""


class NumericalOverflowError(SingflowError, ArithmeticError):
    """A Runge-Kutta stage produced a non-finite value."""


class StiffnessError(SingflowError):
    """Adaptive step fell below the configured floor."""


class BracketError(SingflowError):
    """Crossing search called on an interval without a sign change."""


class NoEntryError(SingflowError):
    """Trajectory never reached the regularization ball."""


class TrappedInBallError(SingflowError):
    """Regularized flow did not leave the unit ball within the allowed delay."""


class InvalidSamplerError(SingflowError, ValueError):
    """Escape sampler produces mass inside the regularization ball."""


class BoundViolationError(SingflowError):
    """Radial field dropped below the configured lower bound F_m."""


class NotFocusingError(SingflowError):
    """Initial condition did not decay toward the origin."""


class EmptyHistogramError(SingflowError):
    """All histogram mass fell outside the grid bounds."""


class SingularSampleError(DomainError):
    """Zero-norm sample where a direction is required."""


class EnsembleFailureError(SingflowError):
    """Too many trajectories of an ensemble failed."""


class ConfigError(SingflowError, ValueError):
    """Invalid experiment configuration."""
