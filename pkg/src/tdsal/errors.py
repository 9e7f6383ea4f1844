"""Exception hierarchy shared by all modules.

Three broad families map onto CLI exit codes: ConfigError (2),
DataError (3) and InternalError (4).
"""


class TdsalError(Exception):
    """Base class for all package errors."""


class ConfigError(TdsalError):
    """Invalid configuration value or unknown config key."""


class DataError(TdsalError):
    """Invalid or inconsistent input data."""


class InternalError(TdsalError):
    """An invariant the implementation relies on was violated."""


# --- file formats ---

class BadMagic(DataError):
    """File does not start with the expected magic bytes."""


class BadVersion(DataError):
    """Unsupported format version."""


class DimMismatch(DataError):
    """Array or vector dimensions are inconsistent."""


class NegativeFeature(DataError):
    """Feature tensor contains negative values (must be post-ReLU)."""


class IoError(DataError):
    """Underlying I/O operation failed."""


# --- manifest ---

class ParseError(DataError):
    """Malformed manifest row; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateId(DataError):
    """Two manifest rows share the same id."""


# --- training / inference ---

class DegenerateData(DataError):
    """Training set contains a single class."""


class NoPositives(DataError):
    """No feature crossed the saliency threshold in any positive image."""


class UnknownCategory(DataError):
    """Requested category is not part of the model bundle."""


class EmptyCandidates(DataError):
    """Bottom-up candidate set is empty."""


class EmptyImage(DataError):
    """Image has zero pixels."""


class EmptyGroundTruth(DataError):
    """Ground-truth mask has no positive pixels."""


class MissingGroundTruth(DataError):
    """Manifest lacks the ground-truth column required by an eval task."""


class IndexOutOfRange(DataError):
    """Feature or slot index outside the valid range."""


class BadTarget(DataError):
    """Upsampling target smaller than the source."""


class BadK(DataError):
    """Superpixel count outside [1, pixel count]."""


class BadSpec(DataError):
    """Synthetic-instance spec is inconsistent."""
