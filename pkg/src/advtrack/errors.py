"""Exception types raised across the package."""


class AdvTrackError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(AdvTrackError, ValueError):
    pass


class EmptyRegion(AdvTrackError, ValueError):
    pass


class BadMagic(AdvTrackError, ValueError):
    pass


class BadDimensions(AdvTrackError, ValueError):
    pass


class ConfigInvalid(AdvTrackError, ValueError):
    pass


class RegionTooSmall(AdvTrackError, ValueError):
    pass


class NoDisjointCandidate(AdvTrackError):
    """Every candidate box overlaps the reference box."""


class TargetOutsideRegion(AdvTrackError):
    """The targeted point is too far from every candidate center."""


class LengthMismatch(AdvTrackError, ValueError):
    pass


class MissingSeries(AdvTrackError, KeyError):
    pass
