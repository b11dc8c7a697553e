"""Exception types raised across the package."""


class PsvcError(Exception):
    """Base class for all errors raised by this package."""


# dsp
class InsufficientSamples(PsvcError, ValueError):
    pass


class WindowTooLarge(PsvcError, ValueError):
    pass


class EmptySet(PsvcError, ValueError):
    pass


class GroupMismatch(PsvcError, ValueError):
    pass


class MixedPlaintextGroup(PsvcError, ValueError):
    pass


class ZeroNoise(PsvcError, ValueError):
    pass


# cpa
class MissingPrevState(PsvcError, ValueError):
    pass


class ZeroVariance(PsvcError, ValueError):
    pass


class InsufficientTraces(PsvcError, ValueError):
    pass


# leakdown
class EmptySummary(PsvcError, ValueError):
    pass


class OutOfOperatingRange(PsvcError, ValueError):
    pass


# traceio
class TraceFormatError(PsvcError, ValueError):
    pass


class BadMagic(TraceFormatError):
    pass


class UnsupportedVersion(TraceFormatError):
    pass


class UnsupportedSampleFormat(TraceFormatError):
    pass


class TruncatedFile(TraceFormatError):
    pass


class LengthMismatch(TraceFormatError):
    pass
