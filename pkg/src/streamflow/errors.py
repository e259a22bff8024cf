"""Exception types shared across the package."""


class StreamflowError(Exception):
    pass


class InvalidInputError(StreamflowError, ValueError):
    """Bad operand: zero dimension, corrupted grid, unknown name."""


class DimensionError(StreamflowError, ValueError):
    """Incompatible matrix dimensions."""


class LayoutError(StreamflowError, ValueError):
    """Tiled operand carries the wrong layout tag for the operation."""


class ConfigError(StreamflowError, ValueError):
    """Unparseable or inconsistent configuration (CLI exit code 2)."""


class InvariantError(StreamflowError, RuntimeError):
    """A simulation invariant was violated (CLI exit code 3)."""


class CalibrationError(StreamflowError, RuntimeError):
    """Calibration failed to converge (CLI exit code 4)."""
