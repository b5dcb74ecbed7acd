"""Exception hierarchy shared by every dyadscan module."""


class DyadscanError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class MalformedRecord(DyadscanError, ValueError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class EmptyDataset(DyadscanError, ValueError):
    pass


class InconsistentChannelCount(DyadscanError, ValueError):
    pass


class IoFailure(DyadscanError, OSError):
    pass


class SingularExtinction(DyadscanError, ValueError):
    pass


class SeriesTooShort(DyadscanError, ValueError):
    pass


class InvalidBand(DyadscanError, ValueError):
    pass


class ZeroChannel(DyadscanError, ValueError):
    pass


class EmptySeries(DyadscanError, ValueError):
    pass


class WindowTooNarrow(DyadscanError, ValueError):
    pass


class InvalidPath(DyadscanError, ValueError):
    pass


class ShapeMismatch(DyadscanError, ValueError):
    pass


class EmptySplit(DyadscanError, ValueError):
    pass


class TooFewSamples(DyadscanError, ValueError):
    pass


class LengthMismatch(DyadscanError, ValueError):
    pass


class MissingReactionTime(DyadscanError, ValueError):
    pass


class EmptySample(DyadscanError, ValueError):
    pass


class DegenerateSample(DyadscanError, ValueError):
    pass


class InvalidParams(DyadscanError, ValueError):
    pass
