"""Exception hierarchy.

Everything raised on purpose by the package derives from ``FreshMemError``.
``DataError`` marks problems with input data (bad files, bad streams), which
the CLI maps to exit code 3.
"""


class FreshMemError(Exception):
    pass


class DataError(FreshMemError):
    pass


# stream-io

class StreamFormatError(DataError):
    pass


class BadMagicError(StreamFormatError):
    pass


class UnsupportedVersionError(StreamFormatError):
    pass


class TruncatedHeaderError(StreamFormatError):
    pass


class TruncatedFrameError(StreamFormatError):
    pass


class NonFiniteValueError(StreamFormatError):
    pass


class ShapeMismatchError(DataError, ValueError):
    pass


# ordering of step indices

class StepOrderError(DataError, ValueError):
    """A frame arrived with a step index that breaks the ordering contract."""


# configuration and parameters

class InvalidConfigError(FreshMemError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvalidRangeError(FreshMemError, ValueError):
    pass


# memory queries

class EmptyBankError(FreshMemError):
    pass


class TauOutOfRangeError(FreshMemError, IndexError):
    pass


class BudgetError(FreshMemError):
    """Consolidation was requested while the episode store is within budget."""


# state files

class StateFileError(DataError):
    pass


class VersionMismatchError(StateFileError):
    pass


class FingerprintMismatchError(StateFileError):
    pass


# harness

class MarginUnsatisfiableError(FreshMemError):
    pass


class HistoryTooShortError(FreshMemError, ValueError):
    pass
