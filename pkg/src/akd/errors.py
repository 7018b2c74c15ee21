"""Exception hierarchy shared across the package."""


class AkdError(Exception):
    """Base class for all package errors."""


class DimensionError(AkdError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ContractError(AkdError, ValueError):
    """A caller violated a documented precondition."""


class ConfigError(AkdError, ValueError):
    """Invalid or inconsistent configuration."""


class UnsupportedCombinationError(ConfigError):
    """A teacher/student shape combination with no defined semantics."""


class NumericError(AkdError, ArithmeticError):
    """Non-finite values encountered where finite ones are required."""


class CheckpointError(AkdError, IOError):
    """Corrupt or malformed checkpoint file."""
