"""Exception hierarchy shared across the package.

Each class maps to one failure mode surfaced by the CLI exit codes:
config errors exit 2, capacity errors exit 3, numerical blowups exit 4.
"""


class StopLabError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(StopLabError, ValueError):
    """An argument violates a documented precondition."""


class IncompatibleOperandsError(StopLabError):
    """Two objects do not share the structure an operation requires (e.g. grids)."""


class CapacityExceededError(StopLabError):
    """Problem size exceeds what an exact algorithm is allowed to attempt."""


class ContractViolationError(StopLabError):
    """A callback (policy, coefficient) broke its interface contract."""


class NumericalBlowupError(StopLabError):
    """A simulation produced a non-finite value.

    Carries the grid step and particle where the blowup was detected.
    """

    def __init__(self, message: str, step: int | None = None, particle: int | None = None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class ConfigError(StopLabError):
    """A configuration document failed validation."""
