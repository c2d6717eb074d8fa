"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data/config/schema/
format problems exit 2, training divergence exits 3.
"""


class EapcrError(Exception):
    """Base class for package errors."""


class DimensionError(EapcrError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(EapcrError, ValueError):
    """A value is outside the mathematical domain of the operation."""


class ConfigError(EapcrError, ValueError):
    """A configuration value or file is invalid."""


class UsageError(EapcrError, ValueError):
    """An API or CLI entry point was called incorrectly."""


class DataError(EapcrError, ValueError):
    """Input data is malformed or inconsistent with its declared schema."""


class SchemaError(EapcrError, ValueError):
    """A declared schema does not match the data or is itself invalid."""


class FormatError(EapcrError, ValueError):
    """A binary or text file does not follow its expected layout."""


class TokenIndexError(EapcrError, IndexError):
    """An embedding index is outside the table's vocabulary."""


class LabelError(EapcrError, IndexError):
    """A class label is outside the valid range for the output layer."""


class DivergenceError(EapcrError, RuntimeError):
    """Training produced non-finite values; carries the partial run record."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
