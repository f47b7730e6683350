"""Exception types shared across the package."""


class DrexError(Exception):
    """Base class for all package errors."""


class ParseError(DrexError):
    """Raised when an input file cannot be parsed."""


class SchemaError(DrexError):
    """Raised for relation labels that are not part of the active schema."""


class InputError(DrexError):
    """Raised for invalid model-input arguments (e.g. empty entity strings)."""


class BoundsError(DrexError):
    """Raised when a token span falls outside the dialogue region."""


class ShapeError(DrexError):
    """Raised on tensor/vector dimension mismatches."""


class LengthError(DrexError):
    """Raised when a sequence exceeds the encoder's maximum length."""


class ConfigError(DrexError):
    """Raised for invalid run or system configuration."""


class EvaluationError(DrexError):
    """Raised when a metric is undefined for the given predictions."""
