"""Error types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class OpseqError(Exception):
    """Base class for all package errors."""


class ConfigError(OpseqError):
    """Invalid parameters, config files, or CLI usage."""


class DataError(OpseqError):
    """Invalid or inconsistent input data."""


class ParseError(DataError):
    """Disassembly listing could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class EmptyAfterFilterError(DataError):
    """A sequence lost every token to vocabulary filtering."""

    def __init__(self, sample_id: str):
        super().__init__(f"sequence {sample_id!r} is empty after vocabulary filtering")
        self.sample_id = sample_id


class UnsupportedShapeError(DataError):
    """Model shape not supported by the requested operation."""


class NumericError(OpseqError):
    """Numerical failure (NaN or divergence) during training."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration
