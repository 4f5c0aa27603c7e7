"""Exception types shared across the package."""


class TTRSError(ValueError):
    """Base class for errors raised by this package."""


class CapExceededError(TTRSError):
    """A dense materialization would exceed the configured entry cap."""


class ShapeError(TTRSError):
    """Mode extents, bond ranks, or sketch sizes are inconsistent."""


class RankError(TTRSError):
    """A requested rank exceeds what the data can support."""


class DegenerateError(TTRSError):
    """An input is singular where the operation needs it nonsingular
    (zero matrix to trim, vanishing singular values, nonpositive mass)."""


class SampleFormatError(TTRSError):
    """A sample file failed to parse or contains out-of-range values."""


class ConfigError(TTRSError):
    """An experiment configuration is invalid; message names the field."""
