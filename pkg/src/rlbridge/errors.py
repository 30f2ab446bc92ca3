"""Exception hierarchy shared by every module."""


class BridgeError(Exception):
    """Base class for all package errors."""


class DomainError(BridgeError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class PreconditionError(BridgeError):
    """A mathematical precondition (for instance ``F(t) > 0``) does not hold."""


class InconsistentObservationError(DomainError):
    """Observations that have probability zero under the model."""


class NumericalError(BridgeError, ArithmeticError):
    """Quadrature failed to converge or a normaliser underflowed."""


class IntegrityError(BridgeError):
    """A sampled path contradicts its own metadata."""


class InsufficientSampleError(BridgeError):
    """A Monte Carlo estimate rests on too few retained samples."""
