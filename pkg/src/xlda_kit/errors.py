"""Shared exception types.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2. Library callers catch ``DataError`` for anything wrong with inputs.
"""


class XldaKitError(Exception):
    """Base class for all errors raised by this package."""


class DataError(XldaKitError):
    """Invalid input data: bad records, bad scores, malformed files."""


class ConfigError(XldaKitError):
    """Invalid configuration values (bad fractions, shapes, ranges)."""


class ConstraintInfeasibleError(DataError):
    """The cross-lingual packing constraint cannot be satisfied."""


class TrainingDivergedError(XldaKitError):
    """Loss became non-finite during training."""
