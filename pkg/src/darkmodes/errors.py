"""Exception types raised across the package."""


class DarkModesError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(DarkModesError, ValueError):
    """A Hilbert-space dimension or mode count is out of range."""


class DimensionMismatchError(DarkModesError, ValueError):
    """Operands live on spaces of different dimension."""


class TruncationError(DarkModesError, ValueError):
    """A requested state does not fit below the Fock cutoff."""


class ConfigurationError(DarkModesError, ValueError):
    """A system, schedule or scenario description is inconsistent."""


class DomainError(DarkModesError, ValueError):
    """A scalar argument lies outside the function's domain."""


class IntegrationError(DarkModesError, RuntimeError):
    """The integrator produced a state that violates a density-matrix invariant.

    Attributes
    ----------
    time : float
        Simulation time (units of 1/gamma) at which the violation was detected.
    partial : object or None
        Samples recorded before the failure, when the caller provides them.
    """

    def __init__(self, message, time, partial=None):
        super().__init__(f"{message} (at gamma*t = {time:.6g})")
        self.time = time
        self.partial = partial


class TruncationWarning(UserWarning):
    """A thermal state loses noticeable probability mass to the Fock cutoff."""
