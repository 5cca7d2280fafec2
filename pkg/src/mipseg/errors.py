"""Exception hierarchy shared by the library and the command line tool.

Validation failures (bad arguments, malformed or mismatched files) map to
exit code 2; anything else that the toolkit raises deliberately maps to 1.
"""


class MipSegError(Exception):
    """Base class for every error raised deliberately by this package."""

    exit_code = 1
    code = "error"


class ValidationError(MipSegError):
    """Invalid input: wrong shapes, bad parameters, malformed files."""

    exit_code = 2
    code = "validation"


class MetaImageError(ValidationError):
    """Malformed MetaImage header or payload."""

    code = "metaimage"


class MissingPayloadError(MetaImageError):
    """Header references a raw payload file that does not exist."""

    code = "missing-payload"


class PayloadSizeError(MetaImageError):
    """Raw payload byte count disagrees with DimSize and ElementType."""

    code = "payload-size-mismatch"


class UnsupportedElementTypeError(MetaImageError):
    """ElementType outside the supported MET_* set."""

    code = "unsupported-element-type"


class NonFiniteDataError(ValidationError):
    """NaN or Inf encountered where finite values are required."""

    code = "non-finite-data"


class DegenerateRangeError(ValidationError):
    """Constant-intensity volume cannot be range-normalized."""

    code = "degenerate-range"


class DimsMismatchError(ValidationError):
    """Grids that must share dimensions do not."""

    code = "dims-mismatch"


class MaskPngError(ValidationError):
    """Mask PNG missing, malformed, or of unexpected size."""

    code = "mask-png"


class EmptyClassError(ValidationError):
    """A label class that must be populated is empty."""

    code = "empty-class"


class EmptySetError(ValidationError):
    """A voxel or pixel set that must be nonempty is empty."""

    code = "empty-set"


class DegenerateClError(MipSegError):
    """Label/probability overlap too thin to estimate the label-error joint."""

    code = "degenerate-cl"


class UndefinedMetricError(ValidationError):
    """Metric undefined for the given inputs (e.g. both masks empty)."""

    code = "undefined-metric"
