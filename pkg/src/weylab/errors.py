"""Exception types shared across the package."""


class WeylabError(Exception):
    """Base class for all package errors."""


class DomainError(WeylabError):
    """A point violates a chart's domain predicate or singular-set guard."""

    def __init__(self, message, point=None, predicate=None):
        super().__init__(message)
        self.point = point
        self.predicate = predicate


class ConditioningError(WeylabError):
    """A metric is too close to singular for reliable numerics."""


class ArgumentError(WeylabError):
    """Invalid arguments to an operation (bad word, empty sample, ...)."""


class IncompleteGeodesicError(WeylabError):
    """The exponential map was requested past the measured life-time."""

    def __init__(self, message, lifetime=None, record=None):
        super().__init__(message)
        self.lifetime = lifetime
        self.record = record


class CoverageError(WeylabError):
    """A point could not be reduced to the fundamental domain in budget."""


class ConstructionError(WeylabError):
    """A catalog constructor received a profile violating its constraints."""
