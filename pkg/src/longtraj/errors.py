"""Exception types raised across the package."""


class LongTrajError(Exception):
    """Base class for all package errors."""


class BadMagic(LongTrajError):
    pass


class Truncated(LongTrajError):
    pass


class NonFinite(LongTrajError):
    pass


class DimensionMismatch(LongTrajError):
    pass


class EmptyInput(LongTrajError):
    pass


class EmptyCell(LongTrajError):
    pass


class DegenerateDistribution(LongTrajError):
    """Magnitude sample has zero spread (std or IQR), bounds cannot be estimated."""


class OutOfDomain(LongTrajError):
    pass


class LengthMismatch(LongTrajError):
    pass


class ConfigError(LongTrajError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
