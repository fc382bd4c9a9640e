"""Exception hierarchy shared by all plume modules.

Every failure mode surfaced to callers (and to the CLI, which maps these to
exit codes) is a subclass of PlumeError with a stable ``category`` string so
reports stay machine-parsable.
"""


class PlumeError(Exception):
    category = "error"


class DimensionError(PlumeError):
    """Shapes of two operands do not conform."""

    category = "dimension"

    def __init__(self, op, shape_a, shape_b):
        super().__init__(f"{op}: incompatible shapes {shape_a} vs {shape_b}")
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)


class BatchTooSmallError(PlumeError):
    category = "batch-too-small"


class DegenerateEmbeddingError(PlumeError):
    category = "degenerate-embedding"


class AucUndefinedError(PlumeError):
    category = "auc-undefined"


class ModelNotTrainedError(PlumeError):
    category = "model-not-trained"


class NoDataError(PlumeError):
    category = "no-data"


class CheckInvalidError(PlumeError):
    category = "check-invalid"


class FormatError(PlumeError):
    category = "format"


class BadMagicError(FormatError):
    category = "bad-magic"


class TruncatedPayloadError(FormatError):
    category = "truncated"


class VersionMismatchError(FormatError):
    category = "version-mismatch"


class ConfigError(PlumeError):
    category = "config"
