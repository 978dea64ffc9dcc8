"""
Error Types
Exception hierarchy shared by every module of the TTM library.
"""


class TTMError(Exception):
    """Base class for all library errors."""


class DimensionError(TTMError, ValueError):
    """Operand shapes do not fit together."""


class NumericError(TTMError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class UsageError(TTMError, RuntimeError):
    """API called outside its contract (e.g. backward on a non-scalar)."""


class ConfigError(TTMError, ValueError):
    """Invalid or inconsistent configuration."""


class CapacityError(TTMError, IndexError):
    """More tokens than a fixed-size table can serve."""


class UnsupportedVariantError(TTMError, ValueError):
    """Operation not defined for the requested variant."""


class DivergenceError(TTMError, ArithmeticError):
    """Training produced a non-finite loss."""


class CheckpointError(TTMError, OSError):
    """Checkpoint or snapshot file missing or malformed."""
