"""Exception types raised across emdreg."""


class EmdRegError(Exception):
    """Base class for toolkit errors."""


class ImageFormatError(EmdRegError):
    """Raster exists but is not a supported grayscale format."""


class NumericalError(EmdRegError):
    """A computation produced a singular system or a non-finite value."""


class ConfigError(EmdRegError):
    """Experiment configuration is invalid."""


class RecordsParseError(EmdRegError):
    """A records CSV could not be parsed."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
