"""Exception types shared across the package.

Every error carries a short class name that the CLI prints as the
machine-readable error kind.
"""


class FGRNError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(FGRNError, ValueError):
    pass


class NotDivisible(FGRNError, ValueError):
    pass


class NotScalar(FGRNError, ValueError):
    pass


class ImageTooSmall(FGRNError, ValueError):
    pass


class TooSmall(FGRNError, ValueError):
    pass


class NaNLoss(FGRNError, FloatingPointError):
    pass


class CorruptFile(FGRNError, IOError):
    pass


class VersionMismatch(FGRNError, IOError):
    pass


class BadConfig(FGRNError, ValueError):
    pass


class DecodeError(FGRNError, IOError):
    pass
