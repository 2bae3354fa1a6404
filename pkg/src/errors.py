"""Exception hierarchy shared by the library and the command-line front-end."""

from typing import Optional


class TahiError(Exception):
    """Base class for every error the toolkit raises on purpose."""

    exit_code = 4


class InputError(TahiError):
    """Bad input: unreadable file, schema violation, violated precondition."""

    exit_code = 2


class RasterFormatError(InputError):
    """A raster or mask file does not parse under its declared format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ConfigError(InputError):
    """Configuration document is malformed or fails validation."""


class PreconditionError(InputError):
    """An operation was called with inputs outside its contract."""


class DatasetError(InputError):
    """Dataset inputs or an on-disk dataset tree are inconsistent."""


class UndefinedThresholdError(InputError):
    """Otsu threshold requested on a constant image."""


class SceneRejectedError(TahiError):
    """A scene cannot yield a usable pair (no oil, or mask too large)."""

    exit_code = 3


class InvariantViolation(TahiError):
    """An internal consistency check failed."""

    exit_code = 4
