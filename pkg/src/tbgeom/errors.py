"""Exception hierarchy shared by all modules."""


class GeometryError(Exception):
    """Base class for every error raised by tbgeom."""


class DomainError(GeometryError, ValueError):
    """A point lies outside the admissible domain of a chart or evaluator."""

    def __init__(self, message, point=None, coordinate=None):
        self.point = point
        self.coordinate = coordinate
        if coordinate is not None:
            message = f"{message} (coordinate {coordinate})"
        if point is not None:
            message = f"{message} at point {list(map(float, point))}"
        super().__init__(message)


class DegenerateImmersionError(GeometryError):
    """The Jacobian of an immersion lost rank."""


class IsometryError(GeometryError):
    """The declared source metric does not match the induced one."""


class SingularMetricError(GeometryError):
    """A metric matrix is singular or has the wrong signature."""


class NondegeneracyError(GeometryError):
    """A g-natural metric violates a(t) != 0 or F(t) != 0."""


class NotNormalError(GeometryError):
    """A vector expected to be normal to a submanifold is not."""


class PreconditionError(GeometryError):
    """A hypothesis required by an operation does not hold."""


class CasePatternError(PreconditionError):
    """Generator values sit inside the dead zone between two frame cases."""


class ConfigError(GeometryError):
    """A scenario configuration could not be parsed or validated."""
