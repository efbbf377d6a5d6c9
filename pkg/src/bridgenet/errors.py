"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class BridgeNetError(Exception):
    exit_code = 1


class ConfigError(BridgeNetError, ValueError):
    """Invalid configuration, flag combination or usage."""

    exit_code = 2


class ShapeError(BridgeNetError, ValueError):
    """Tensor or image dimensions violate an operation's contract."""

    exit_code = 3


class DataError(BridgeNetError):
    """Unreadable, missing or malformed dataset content."""

    exit_code = 3


class CheckpointError(BridgeNetError):
    """Checkpoint is corrupt or incompatible with the requested config."""

    exit_code = 2


class NumericError(BridgeNetError, ArithmeticError):
    """Non-finite loss or metric during training/evaluation."""

    exit_code = 4
