"""Exception hierarchy for the wildloop engine.

Every error raised by the library derives from :class:`WildloopError`, so
callers (CLI, service) can distinguish validation failures from genuine
runtime faults with a single except clause.
"""


class WildloopError(Exception):
    """Base class for all wildloop errors."""


# --- ingest ---------------------------------------------------------------

class MissingFile(WildloopError):
    pass


class MalformedRecord(WildloopError):
    """A line or entry in an input file could not be parsed.

    Carries the offending location so users can fix their files.
    """

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class UnknownLabel(WildloopError):
    pass


class DuplicateImageId(WildloopError):
    pass


class InvalidSpec(WildloopError):
    pass


# --- imaging --------------------------------------------------------------

class DegenerateBox(WildloopError):
    pass


class NoPixels(WildloopError):
    pass


# --- embedding ------------------------------------------------------------

class UnknownProvider(WildloopError):
    pass


class MissingEmbedding(WildloopError):
    pass


class DimensionMismatch(WildloopError):
    pass


class CorruptStore(WildloopError):
    pass


# --- classifier -----------------------------------------------------------

class EmptyTrainingSet(WildloopError):
    pass


# --- merge ----------------------------------------------------------------

class LengthMismatch(WildloopError):
    pass


class UnnormalizedScore(WildloopError):
    pass


# --- metrics --------------------------------------------------------------

class EmptyMatrix(WildloopError):
    pass


# --- tuning ---------------------------------------------------------------

class InvalidFractions(WildloopError):
    pass


class EmptyDataset(WildloopError):
    pass


class TooFewStations(WildloopError):
    pass


# --- active learning ------------------------------------------------------

class EmptyPool(WildloopError):
    pass


class NotQueriedOrUnknown(WildloopError):
    pass


class LabelConflict(WildloopError):
    pass


class NoLabels(WildloopError):
    pass


class NoModel(WildloopError):
    pass


# --- store / service ------------------------------------------------------

class IoFailure(WildloopError):
    pass


class VersionMismatch(WildloopError):
    pass


class CorruptState(WildloopError):
    pass


class ProjectLocked(WildloopError):
    pass


class BindFailure(WildloopError):
    pass
