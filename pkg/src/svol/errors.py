"""Exception hierarchy shared by every module."""


class SvolError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 2


class ShapeError(SvolError, ValueError):
    exit_code = 2


class NumericError(SvolError, ArithmeticError):
    exit_code = 2


class ConfigError(SvolError, ValueError):
    exit_code = 1


class CapacityError(SvolError, ValueError):
    """More ground-truth boxes in a frame than prediction slots."""

    exit_code = 2


class ProtocolError(SvolError, ValueError):
    """Split or pairing rules violated (train/eval leakage, wrong checkpoint)."""

    exit_code = 1


class UndefinedSampleError(SvolError, ValueError):
    exit_code = 2
