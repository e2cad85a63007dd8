"""Exception types shared across the package."""


class AncError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AncError, ValueError):
    """Inconsistent or invalid parameters (lengths, rates, shapes, ranges)."""


class UndefinedReferenceError(AncError, ValueError):
    """The reference operand of a normalized metric has zero energy."""


class DesignError(AncError, ValueError):
    """A filter design cannot meet its requirements."""


class DatasetError(AncError):
    """Dataset directory missing, unreadable or empty after ingestion."""


class DivergenceError(AncError):
    """An iterative method produced non-finite or exploding values."""
