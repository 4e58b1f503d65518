class GaussianShadingError(Exception):
    """Base class for errors raised by this package."""


class CapacityError(GaussianShadingError, ValueError):
    """The latent capacity cannot hold the requested message."""


class DimensionMismatchError(GaussianShadingError, ValueError):
    pass


class ChannelError(GaussianShadingError, ValueError):
    """A channel was misconfigured or applied to the wrong carrier."""


class NumericalOverflowError(GaussianShadingError, FloatingPointError):
    pass


class ConfigError(GaussianShadingError, ValueError):
    """Invalid benchmark configuration.

    ``field`` names the offending key (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
