"""Exception types raised by segdepth."""


class SegDepthError(Exception):
    """Base class for all errors raised by this package."""


class UnknownPresetError(SegDepthError, KeyError):
    pass


class ClassTableError(SegDepthError, ValueError):
    pass


class ShapeMismatchError(SegDepthError, ValueError):
    pass


class LabelValueError(SegDepthError, ValueError):
    """A label map holds a value that is neither a class id nor the ignore id."""

    def __init__(self, message, pixel=None, value=None):
        super().__init__(message)
        self.pixel = pixel
        self.value = value


class NonFiniteError(SegDepthError, ValueError):
    pass


class EmptyStatisticsError(SegDepthError, ValueError):
    pass


class WeightDomainError(SegDepthError, ValueError):
    pass


class NoValidDepthError(SegDepthError, ValueError):
    pass


class PoolTooSmallError(SegDepthError, ValueError):
    pass


class CropError(SegDepthError, ValueError):
    pass


class FormatError(SegDepthError, ValueError):
    """An input file does not have the expected layout."""


class ChannelError(FormatError):
    pass


class BitDepthError(FormatError):
    pass


class BadMagicError(FormatError):
    pass


class VersionError(BadMagicError):
    pass


class TruncatedError(FormatError):
    pass


class ManifestError(SegDepthError, ValueError):
    pass
