"""Exception types shared across the package."""


class OrientError(Exception):
    """Base class. ``category`` is what the CLI prints after ``error:``."""

    category = "error"


class ShapeError(OrientError, ValueError):
    category = "shape"


class ValidationError(OrientError, ValueError):
    category = "validation"


class FormatError(OrientError, ValueError):
    category = "format"


class ConfigMismatchError(OrientError, ValueError):
    category = "config-mismatch"


class EvalError(OrientError, RuntimeError):
    category = "eval"
