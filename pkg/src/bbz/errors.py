"""Exception hierarchy shared by all modules."""


class BBZError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BBZError, ValueError):
    """A parameter lies outside the range where the soliton family exists."""


class ConfigurationError(BBZError, ValueError):
    """A grid or solver setting cannot produce a trustworthy result."""


class SolvabilityError(BBZError, ArithmeticError):
    """A singular system was given a right-hand side outside its range."""


class DiscretizationError(BBZError, ArithmeticError):
    """The discrete problem contradicts a structural property it must have."""


class ConvergenceError(BBZError, ArithmeticError):
    """An iterative eigensolver ran out of iterations."""


class CollisionProximityError(BBZError, ArithmeticError):
    """The symplectic form of a gap eigenvector vanishes, as it does at a collision."""
