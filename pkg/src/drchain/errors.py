"""Exception hierarchy shared by all modules."""


class DrChainError(Exception):
    """Base class for all package errors."""


class ValidationError(DrChainError, ValueError):
    """Model, config or option values violate a stated invariant."""


class NumericalError(DrChainError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class SingularSubsystemError(NumericalError):
    """A subsystem dynamic stiffness block is singular at the excitation frequency."""


class ZeroDivisorError(NumericalError):
    """The coupling scalar a_R^T A_R^{-1} D_a vanishes, so no finite absorber force exists."""


class TuningError(NumericalError):
    """The resonator cannot be tuned (Q(omega) == 0)."""


class SpectrumError(NumericalError):
    """Characteristic-root computation failed for every candidate."""


class SimulationError(NumericalError):
    """Time integration produced a non-finite state."""
