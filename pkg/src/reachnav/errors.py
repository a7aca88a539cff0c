"""Exception hierarchy shared by all reachnav modules."""


class ReachNavError(Exception):
    """Base class for every error raised by reachnav."""


class ValidationError(ReachNavError, ValueError):
    """Invalid input: bad bounds, malformed files, out-of-range controls."""


class OutOfDomainError(ValidationError):
    """A query state lies outside the grid in a non-periodic dimension."""


class GridMismatchError(ValidationError):
    """Two fields that must share a grid do not."""


class NumericalError(ReachNavError):
    """Base for failures of a numerical procedure on valid input."""


class InfeasibleError(NumericalError):
    """The problem has no solution (goal buried in obstacles, etc.)."""


class NonConvergenceError(NumericalError):
    def __init__(self, message, residual, passes):
        super().__init__(f"{message} (residual={residual:.3e} after {passes} cycles)")
        self.residual = residual
        self.passes = passes


class PlanningFailure(NumericalError):
    """No waypoint candidate survived feasibility filtering and cost evaluation."""
