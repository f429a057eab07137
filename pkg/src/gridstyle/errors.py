"""Exception hierarchy shared across the package."""


class GridStyleError(Exception):
    """Base class for all package errors."""


class ConfigError(GridStyleError):
    """Invalid configuration (bad parameter values, missing paths in config)."""


class DataError(GridStyleError):
    """Invalid input data discovered while running."""


class ShapeMismatch(DataError):
    pass


class ChannelMismatch(ShapeMismatch):
    pass


class EmptyMask(DataError):
    """Mask weight sum fell below the degeneracy threshold."""


class WeightMissing(DataError):
    """A required layer is absent from the weight bundle."""

    def __init__(self, layer):
        super().__init__(f"missing weights for layer {layer!r}")
        self.layer = layer


class BadKernel(ConfigError):
    pass


class NonDivisibleDims(ShapeMismatch):
    pass


class LengthMismatch(DataError):
    pass


class MissingFrame(DataError):
    pass


class MissingFlow(ConfigError):
    pass


class CorruptFile(DataError):
    pass


class UnknownVersion(DataError):
    pass
