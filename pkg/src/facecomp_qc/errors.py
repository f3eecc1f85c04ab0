"""Exception types raised across the library."""


class FaceCompError(Exception):
    """Base class for all errors raised by facecomp_qc."""


# --- codec layer ---

class MalformedStream(FaceCompError):
    """Byte stream could not be decoded."""


class UnsupportedFormat(FaceCompError):
    """Decodable, but not one of PNG / JPEG / JPEG 2000."""


class EncoderUnavailable(FaceCompError):
    """Requested encoder backend is not installed."""


class InvalidQuality(FaceCompError):
    """Quality parameter outside [1, 100]."""


class InvalidDimensions(FaceCompError):
    """Non-positive image dimension or bit depth."""


# --- geometry ---

class DegenerateConfiguration(FaceCompError):
    """Point set does not determine a similarity transform."""


# --- synthesis ---

class EmptySourceList(FaceCompError):
    """A plan was requested for zero source images."""


# --- metrics / labeling ---

class DimensionMismatch(FaceCompError):
    """Full-reference metric called on differently shaped images."""


class ImageTooSmall(FaceCompError):
    """Image smaller than the analysis window."""


class MissingReference(FaceCompError):
    """Compressed sample without a readable reference image."""


class EmptyManifest(FaceCompError):
    """Operation requires at least one manifest record."""


class DegenerateRange(FaceCompError):
    """Min-max normalisation undefined (min == max)."""


# --- regressor ---

class LabelOutOfRange(FaceCompError):
    """Training label outside [0, 1]."""


class ShapeMismatch(FaceCompError):
    """Image shape incompatible with the model input contract."""


class IncompatibleArtifactVersion(FaceCompError):
    """Model checkpoint unreadable or from an unknown format version."""


class EmptyGrid(FaceCompError):
    """Hyperparameter search over zero candidates."""


class DegenerateDistribution(FaceCompError):
    """Score distribution carries no spread to calibrate against."""


# --- evaluation ---

class EmptyInput(FaceCompError):
    """Evaluation requires nonempty score lists."""


class UndefinedF1(FaceCompError):
    """F1 undefined: no true positives, false positives or false negatives."""


class DegenerateInput(FaceCompError):
    """Correlation undefined for constant input."""


class UnknownSampleId(FaceCompError):
    """Comparison references a sample id without a quality score."""


class EmptyComparisons(FaceCompError):
    """EDC evaluation over zero comparisons."""
