"""Random billiard walks in affine Weyl group alcove tessellations."""

from .errors import (ConfigError, DegenerateDirection, GroupTooLarge, HorizonExceeded, InvalidType,
                     NotInGroup, QuotientTooLarge, RBWalkError, WindowTooLong, ZeroVector)
from .walk import WalkConfig

__all__ = ["ConfigError", "DegenerateDirection", "GroupTooLarge", "HorizonExceeded", "InvalidType",
           "NotInGroup", "QuotientTooLarge", "RBWalkError", "WalkConfig", "WindowTooLong", "ZeroVector"]
