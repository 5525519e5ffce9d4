"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map it without a lookup
table: 2 for usage/config problems, 3 for data problems, 4 for numeric
failures.
"""


class MuseError(Exception):
    exit_code = 3


# --- data / ingestion -------------------------------------------------------

class DataError(MuseError, ValueError):
    exit_code = 3


class MalformedCsv(DataError):
    pass


class NonMonotoneTimestamps(DataError):
    pass


class NonFiniteValue(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DimensionMismatch(DataError):
    pass


class EmptyIntersection(DataError):
    pass


class SubjectMismatch(DataError):
    pass


class InvalidSpec(DataError):
    pass


class GridMismatch(DataError):
    pass


class CoverageError(DataError):
    pass


class SignalTooShort(DataError):
    pass


class TooFewIntervals(DataError):
    pass


class NonPositiveInterval(DataError):
    pass


class LengthMismatch(DataError):
    pass


class Degenerate(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class LayoutMismatch(DataError):
    pass


class EmptySegment(DataError):
    pass


class EmptyEnsemble(DataError):
    pass


class MissingPrediction(DataError):
    def __init__(self, message, subject_id=None, dimension=None):
        super().__init__(message)
        self.subject_id = subject_id
        self.dimension = dimension


# --- model / checkpoint -----------------------------------------------------

class InvalidConfig(MuseError, ValueError):
    exit_code = 2


class ShapeMismatch(DataError):
    pass


class StaleCache(MuseError, RuntimeError):
    exit_code = 4


class CheckpointError(DataError):
    pass


class BadMagic(CheckpointError):
    pass


class UnsupportedVersion(CheckpointError):
    pass


class CorruptPayload(CheckpointError):
    pass


class NonFiniteLoss(MuseError, FloatingPointError):
    exit_code = 4


# --- run configuration ------------------------------------------------------

class ConfigError(MuseError):
    exit_code = 2


class UnknownKey(ConfigError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MissingRequiredKey(ConfigError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ConfigTypeError(ConfigError, TypeError):
    pass


class PathError(ConfigError, FileNotFoundError):
    pass
