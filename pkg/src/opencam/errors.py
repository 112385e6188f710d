"""Exception hierarchy shared across the toolkit.

Every error raised by the library derives from OpencamError so callers can
catch broadly; the CLI maps subclasses to stable exit codes.
"""


class OpencamError(Exception):
    """Base class for all library errors."""


# --- tensor persistence ---

class BadMagic(OpencamError):
    pass


class UnsupportedVersion(OpencamError):
    pass


class TruncatedPayload(OpencamError):
    pass


class IoFailure(OpencamError):
    pass


class DecodeFailure(OpencamError):
    pass


class UnsupportedBitDepth(OpencamError):
    pass


# --- generators / specs ---

class InvalidSpec(OpencamError):
    pass


class InvalidDims(OpencamError):
    pass


class DegenerateNoise(OpencamError):
    pass


class UnknownKind(OpencamError):
    pass


class DegenerateKey(OpencamError):
    pass


# --- imaging / linear algebra ---

class ChannelMismatch(OpencamError):
    pass


class DimMismatch(OpencamError):
    pass


class FileMissing(OpencamError):
    pass


# --- metrics ---

class ZeroTruth(OpencamError):
    pass


class TooSmall(OpencamError):
    pass


# --- attacks / studies ---

class NonFiniteObjective(OpencamError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class EmptySet(OpencamError):
    pass


class ConfigError(OpencamError):
    pass


class MissingStudy(OpencamError):
    pass
