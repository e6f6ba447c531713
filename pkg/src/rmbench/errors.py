"""Exception hierarchy shared across the bench."""


class RmbError(Exception):
    """Base class for all bench errors."""


# --- registry ---

class DuplicateId(RmbError):
    pass


class UnknownId(RmbError):
    pass


# --- environment lifecycle ---

class NotReset(RmbError):
    pass


class EpisodeFinished(RmbError):
    pass


class DimensionMismatch(RmbError):
    pass


# --- kinematics ---

class Unreachable(RmbError):
    pass


class NoConvergence(RmbError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


# --- storage ---

class InvariantViolation(RmbError):
    pass


class BadMagic(RmbError):
    pass


class VersionUnsupported(RmbError):
    pass


class CrcMismatch(RmbError):
    def __init__(self, channel: str, chunk: int):
        super().__init__(f"CRC mismatch in channel {channel!r}, chunk {chunk}")
        self.channel = channel
        self.chunk = chunk


class TruncatedFile(RmbError):
    def __init__(self, detail: str, channel: str | None = None):
        super().__init__(detail if channel is None else f"{detail} (channel {channel!r})")
        self.channel = channel


class EmptyDataset(RmbError):
    pass


class NoSuccessfulEpisodes(RmbError):
    pass


# --- networks / policies ---

class ShapeMismatch(RmbError):
    pass


class OddDim(RmbError):
    pass


class BadTimestep(RmbError):
    pass


class MissingChannel(RmbError):
    pass


class NotTrained(RmbError):
    pass


class NonFiniteParameters(RmbError):
    pass


# --- bench / gateway ---

class SpecMismatch(RmbError):
    pass


class BindFailure(RmbError):
    pass
