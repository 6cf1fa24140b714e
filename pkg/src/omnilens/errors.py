"""Exception hierarchy shared by every omnilens module."""


class OmnilensError(Exception):
    pass


class ConfigurationError(OmnilensError, ValueError):
    """Shapes, widths or settings that cannot work together."""


class DegenerateInputError(OmnilensError, ValueError):
    """Input data too small or too degenerate for the requested operation."""


class InputError(OmnilensError, ValueError):
    pass


class UsageError(OmnilensError, RuntimeError):
    pass


class DataError(OmnilensError, LookupError):
    pass


class FormatError(OmnilensError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
