"""Exception hierarchy for the toolkit.

Each distinguishable failure contract gets its own class so callers and
tests can catch precisely.  Validation-style errors double as ValueError
(or KeyError for lookups) to stay friendly to generic callers; file
problems stay on the FeatureFormatError branch so CLI code can map them
to an I/O exit code.
"""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


# file containers and record files

class FeatureFormatError(ToolkitError):
    """A feature file violates the FVF1 container layout."""


class BadMagicError(FeatureFormatError):
    """File does not begin with the ``FVF1`` magic bytes."""


class TruncatedFileError(FeatureFormatError):
    """File ends before the header-declared payload is complete."""


class NonFiniteValueError(FeatureFormatError):
    """A feature payload contains NaN or infinity."""


class ManifestError(ToolkitError, ValueError):
    """A manifest or record file is malformed."""


class EmptyManifestError(ManifestError):
    """Operation requires a manifest with at least one record."""


# loss kernels

class ShapeMismatchError(ToolkitError, ValueError):
    """Arrays that must agree in shape do not."""


class MaskRowAllOnesError(ToolkitError, ValueError):
    """A mask row marks no positive pair at all."""


class ZeroVectorError(ToolkitError, ValueError):
    """Cosine similarity is undefined for a zero-norm vector."""


class NonPositiveTemperatureError(ToolkitError, ValueError):
    """Softmax temperature must be strictly positive."""


class InvalidDistributionError(ToolkitError, ValueError):
    """A probability row does not sum to one within tolerance."""


class NonFiniteEvaluationError(ToolkitError, ValueError):
    """A function under numerical check returned NaN or infinity."""


# quantization

class TooFewPointsError(ToolkitError, ValueError):
    """Fewer data points than requested clusters."""


class DimMismatchError(ToolkitError, ValueError):
    """Feature dimensionalities do not agree."""


# masking

class EmptyBatchError(ToolkitError, ValueError):
    """Batch operations need at least one element."""


# retrieval

class KcSmallerThanNError(ToolkitError, ValueError):
    """Coarse candidate pool smaller than the requested result count."""


class UnknownQueryError(ToolkitError, KeyError):
    """A ranked list references a query absent from the manifest."""


# evaluation

class MissingFeatureError(ToolkitError, KeyError):
    """An id in a manifest has no loaded feature sequence."""


class ZeroNormFrameError(ToolkitError, ValueError):
    """A frame with zero norm makes the cosine frame distance undefined."""


class EmptySequenceError(ToolkitError, ValueError):
    """Operation requires at least one frame."""


class DegenerateInputError(ToolkitError, ValueError):
    """Rank correlation is undefined for constant or too-short series."""


class LengthMismatchError(ToolkitError, ValueError):
    """Paired score lists must have equal lengths."""


# language modeling

class EmptyCorpusError(ToolkitError, ValueError):
    """Language-model training needs a non-empty corpus."""
