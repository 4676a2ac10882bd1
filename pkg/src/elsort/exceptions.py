"""Custom exceptions for elsort."""


class ElsortError(Exception):
    """Base exception for elsort."""

    exit_code = 1


class ConfigurationError(ElsortError):
    """Raised when there's a configuration problem."""

    exit_code = 2


class ValidationError(ConfigurationError):
    """Raised when an input value fails validation."""

    pass


class DataFormatError(ElsortError):
    """Raised when a record file is malformed or truncated."""

    pass


class NonPrintableKeyError(ElsortError):
    """Raised when a key contains a byte outside 32..126."""

    pass


class EmptyInputError(ElsortError):
    """Raised when an operation needs at least one record or key."""

    pass


class InsufficientSampleError(ElsortError):
    """Raised when a training sample has fewer than two keys."""

    pass


class PartitionOverflowError(ElsortError):
    """Raised when a sort buffer holds more records than its capacity."""

    pass


class OversizedPartitionError(ElsortError):
    """Raised when a single partition does not fit the memory budget."""

    pass


class InvariantViolationError(ElsortError):
    """Raised when an ordering or tiling invariant is broken."""

    pass


class StorageError(ElsortError):
    """Raised when reading or writing files fails."""

    exit_code = 3


class InsufficientSpaceError(StorageError):
    """Raised when the destination cannot hold the output."""

    pass


class OutputWriteError(StorageError):
    """Raised when a partition cannot be written to the output."""

    pass


class FragmentWriteError(StorageError):
    """Raised when a fragment or run file cannot be written."""

    pass
