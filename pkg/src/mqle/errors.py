"""Exception hierarchy shared across the pipeline."""


class MqleError(Exception):
    """Base class for all engine errors."""


class DataError(MqleError):
    """Malformed or inconsistent input data (manifest, labels, shapes)."""


class FormatError(DataError):
    """A binary or text artifact does not match its declared format."""


class NumericalError(MqleError):
    """Training or encoding produced non-finite or divergent values."""


class UsageError(MqleError):
    """Invalid arguments or configuration."""
