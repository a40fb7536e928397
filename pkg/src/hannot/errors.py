"""Exception hierarchy shared by every hannot module.

Each exception carries a stable ``code`` string; the HTTP layer maps codes
to status values and clients key their handling off the code, never the
message text.
"""


class HannotError(Exception):
    """Base class for all domain errors."""

    code = "INTERNAL"


# geometry

class EmptySetError(HannotError):
    """A distance operation received an empty point set."""

    code = "EMPTY_SET"


class OutOfBoundsError(HannotError):
    """A point falls outside the grid it is being evaluated against."""

    code = "OUT_OF_BOUNDS"


# image pipeline

class ImageIOError(HannotError):
    """The image file could not be read."""

    code = "IO_ERROR"


class FormatError(HannotError):
    """The image bytes are malformed or in an unsupported format."""

    code = "FORMAT_ERROR"


class NoFeaturesError(HannotError):
    """Feature extraction produced zero points (e.g. a constant image)."""

    code = "NO_FEATURES"


class DegenerateImageError(HannotError):
    """The image is too small to run the extraction pipeline on."""

    code = "DEGENERATE_IMAGE"


# annotation store

class IdConflictError(HannotError):
    """An image id is already taken by different content."""

    code = "ID_CONFLICT"


class UnknownImageError(HannotError):
    """The referenced image id is not in the store."""

    code = "UNKNOWN_IMAGE"


class InvalidRecordError(HannotError):
    """An annotation record violates an invariant."""

    code = "INVALID_RECORD"

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SchemaError(HannotError):
    """A corpus file is malformed."""

    code = "SCHEMA_ERROR"


class CorpusIOError(HannotError):
    """A corpus file or descriptor directory could not be read or written."""

    code = "IO_ERROR"


# retrieval engine

class FingerprintMismatchError(HannotError):
    """Query and corpus were extracted with different parameters."""

    code = "FINGERPRINT_MISMATCH"


class EmptyCorpusError(HannotError):
    """No corpus entry matches the candidate filter."""

    code = "EMPTY_CORPUS"


class InsufficientDataError(HannotError):
    """A class has too few images for leave-one-out evaluation."""

    code = "INSUFFICIENT_DATA"
