"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems exit 1, bad
input data exits 2, training or numeric failures exit 3.
"""


class ProdtaxError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(ProdtaxError):
    exit_code = 1


class DataError(ProdtaxError):
    exit_code = 2


class SchemaError(DataError):
    """A mapped column is missing from the input header."""


class RowError(DataError):
    """A data row violates the Product invariants."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class TaxonomyError(DataError):
    """Empty label space or a subcategory observed under several parents."""


class EmbeddingFormatError(DataError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class ContainerError(DataError):
    """Corrupt, truncated or unreadable model container."""


class IncompatibleVersionError(ContainerError):
    pass


class TrainingError(ProdtaxError):
    exit_code = 3


class NumericError(TrainingError):
    def __init__(self, layer: str, message: str = "non-finite activation"):
        super().__init__(f"{message} in layer '{layer}'")
        self.layer = layer
