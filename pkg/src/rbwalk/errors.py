"""Exception types shared across the package."""


class RBWalkError(Exception):
    """Base class for all package errors."""


class InvalidType(RBWalkError, ValueError):
    pass


class ZeroVector(RBWalkError, ValueError):
    pass


class GroupTooLarge(RBWalkError):
    pass


class NotInGroup(RBWalkError):
    pass


class DegenerateDirection(RBWalkError):
    """Two hyperplanes are struck (numerically) at the same time."""


class HorizonExceeded(RBWalkError, ValueError):
    pass


class QuotientTooLarge(RBWalkError):
    pass


class WindowTooLong(RBWalkError, ValueError):
    pass


class ConfigError(RBWalkError, ValueError):
    pass
