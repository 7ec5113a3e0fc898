"""Exception types shared across the package.

All derive from ValueError so callers that don't care about the
distinction can catch a single base class.
"""


class GradeqError(ValueError):
    """Base class for all errors raised by this package."""


class DimensionError(GradeqError):
    """Shapes or lengths of inputs do not agree."""


class NumericError(GradeqError):
    """A computation produced or received a non-finite value."""


class ParameterError(GradeqError):
    """A configuration value or function argument is out of range."""


class IngestionError(GradeqError):
    """An external file could not be parsed."""
