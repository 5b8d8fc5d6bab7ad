"""Exception types shared across the planner modules."""


class PlannerError(Exception):
    """Base class for all planner errors."""


class DegenerateInput(PlannerError, ValueError):
    """Input geometry is too degenerate (collinear, duplicate points, ...)."""


class DomainError(PlannerError, ValueError):
    """A curve was queried outside of its parameter domain."""


class NoProjection(PlannerError):
    """A point could not be projected onto a curve."""


class FrameTransformError(PlannerError):
    """A stored trajectory could not be re-expressed in a new Frenet frame."""


class ScenarioError(PlannerError, ValueError):
    """Scenario description failed validation."""


class TickFailure(PlannerError):
    """No strategy of the selected controller variant produced a safe plan."""

    def __init__(self, variant, location, residuals=None, message=None):
        self.variant = variant
        self.location = location
        self.residuals = residuals if residuals is not None else {}
        super().__init__(message or f"{variant}: no safe plan at {location}")
