"""Exception hierarchy shared by all modules."""


class ClipDSPError(Exception):
    """Base class for errors raised by clipdsp."""


class DimensionMismatch(ClipDSPError, ValueError):
    pass


class NegativeDiagonal(ClipDSPError, ValueError):
    pass


class NotConnected(ClipDSPError, ValueError):
    pass


class DuplicateEdge(ClipDSPError, ValueError):
    pass


class Unbounded(ClipDSPError, ValueError):
    pass


class NoConvergence(ClipDSPError, RuntimeError):
    pass


class MomentDiverges(ClipDSPError, ValueError):
    pass


class ScheduleInvalid(ClipDSPError, ValueError):
    pass


class IdentityViolation(ClipDSPError, AssertionError):
    """An analysis identity failed to hold during a debug-mode run."""


class UnknownParameter(ClipDSPError, KeyError):
    pass


class ConfigError(ClipDSPError, ValueError):
    """Config file could not be parsed or failed schema checks.

    ``location`` is either ``"line L, column C"`` for syntax errors or a
    dotted field path such as ``"run.T"``.
    """

    def __init__(self, message, location=None):
        self.location = location
        text = f"{location}: {message}" if location else message
        super().__init__(text)
