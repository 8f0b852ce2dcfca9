"""Exception hierarchy shared by every module of the package."""


class WarmstartHMCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WarmstartHMCError, ValueError):
    """A parameter or configuration value is invalid."""


class DomainError(WarmstartHMCError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class UnsupportedTargetError(WarmstartHMCError, ValueError):
    """The target potential does not support the requested operation."""


class NumericalBlowupError(WarmstartHMCError, FloatingPointError):
    """An integrator produced non-finite or exploding coordinates.

    Attributes:
        step: index of the inner step at which the blowup was detected.
    """

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class ConvergenceError(WarmstartHMCError, RuntimeError):
    """An iterative solver did not reach its tolerance."""


class ShootingError(ConvergenceError):
    """The shooting-momentum Newton iteration failed."""


class ReferenceAccuracyError(WarmstartHMCError, RuntimeError):
    """The refined reference flow could not certify its accuracy."""


class ScheduleError(WarmstartHMCError, RuntimeError):
    """A schedule cannot reach the requested divergence threshold."""


class UsageError(WarmstartHMCError):
    """Command-line or harness misuse (exit status 2)."""
