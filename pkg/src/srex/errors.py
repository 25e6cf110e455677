"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Operands live on spaces of different dimensions."""


class PreconditionError(ValueError):
    """A documented operation precondition is not satisfied."""


class InvariantViolationError(RuntimeError):
    """A monitored invariant failed during a computation.

    The ``invariant`` attribute names the violated invariant so batch
    drivers can report it without parsing the message.
    """

    def __init__(self, invariant, message):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class IntegrationError(RuntimeError):
    """Numerical integration failed; ``time`` is where it happened."""

    def __init__(self, time, message):
        super().__init__(f"t={time:g}: {message}")
        self.time = time


class RadialCollapseError(IntegrationError):
    """Radial variable underflowed below the representable range."""


class InconclusiveDichotomyError(RuntimeError):
    """Neither convergence nor rotation detected; extend the horizon."""
