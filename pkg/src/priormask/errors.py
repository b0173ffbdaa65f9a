"""Exception types shared across the package."""


class PriorMaskError(Exception):
    """Base class for all errors raised by priormask."""


class DimensionError(PriorMaskError, ValueError):
    """Tensor shapes are inconsistent."""


class ParameterError(PriorMaskError, ValueError):
    """A scalar parameter is outside its admissible set."""


class NumericError(PriorMaskError, ArithmeticError):
    """A computation produced a non-finite value."""


class RangeError(PriorMaskError, ValueError):
    """A value lies outside the range an operation accepts."""


class FormatError(PriorMaskError):
    """A serialized file is malformed."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class DimOverflowError(FormatError):
    """Declared dimensions are absurd or exceed the available payload."""
