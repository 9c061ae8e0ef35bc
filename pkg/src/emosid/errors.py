"""Exception hierarchy shared by every module."""


class EmosidError(Exception):
    """Base class for all toolkit errors."""


class EmptyAudio(EmosidError):
    pass


class AudioTooShort(EmosidError):
    pass


class NonPositiveEnergy(EmosidError):
    pass


class TooFewFrames(EmosidError):
    pass


class EmptyObservation(EmosidError):
    pass


class DimensionMismatch(EmosidError):
    pass


class InsufficientData(EmosidError):
    pass


class NumericalFailure(EmosidError):
    pass


class InvalidAlpha(EmosidError, ValueError):
    pass


class ParseError(EmosidError):
    pass


class InvariantViolation(EmosidError):
    pass


class UnsupportedFormat(EmosidError):
    pass


class MissingCell(EmosidError):
    pass


class UnknownLabel(EmosidError, KeyError):
    pass


class AblationModelsMissing(EmosidError):
    pass


class EmptyEvaluation(EmosidError):
    pass


class UndefinedColumn(EmosidError):
    pass


class FormatVersionError(EmosidError):
    """Serialized artifact written by an incompatible format version."""
