class MphfError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MphfError, ValueError):
    pass


class EmptyInput(MphfError, ValueError):
    pass


class DuplicateKeys(MphfError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NotInFallback(MphfError, KeyError):
    """Raised for a key that misses every level and is not in the fallback table.

    Only non-member keys can get here.
    """


class SpillIOError(MphfError, OSError):
    def __init__(self, message, path):
        super().__init__(f"{message}: {path}")
        self.path = path


class FormatError(MphfError, ValueError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset
