"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so keep the hierarchy flat:
config problems, data problems, numeric problems, and autodiff misuse.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DegenerateRowError(ValueError):
    """A row-wise operation hit a row with no valid entries."""


class DetachedGraphError(RuntimeError):
    """backward() was called on a tensor with no recorded tape."""


class TapeConsumedError(RuntimeError):
    """backward() was called twice on the same tape without a reset."""


class ReproducibilityError(RuntimeError):
    """A function expected to be deterministic returned differing values."""


class ConfigError(ValueError):
    """Invalid or unknown configuration input."""


class DataError(ValueError):
    """Malformed or insufficient input data."""


class NumericsError(RuntimeError):
    """Non-finite values where finite ones are required."""
