"""Exception hierarchy shared across the pipeline.

Every error raised on a documented contract boundary derives from
:class:`GafDiagError` so callers (and the CLI) can catch one base class.
"""


class GafDiagError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(GafDiagError):
    """An argument fell outside its mathematically valid domain."""


class ConstantSeriesError(GafDiagError):
    """Min-max scaling is undefined: every sample has the same value."""


class TooShortError(GafDiagError):
    """A series or window is shorter than the operation requires."""


class EmptySeriesError(GafDiagError):
    """An operation that needs at least one sample received none."""


class ZeroSignalError(GafDiagError):
    """Noise calibration against a signal whose RMS is zero."""


class StepOutOfRangeError(GafDiagError):
    """Diffusion step index outside ``1..T`` for the given schedule."""


class ParseError(GafDiagError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class EmptyFileError(GafDiagError):
    """An input file contained no data rows."""


class InsufficientDurationError(GafDiagError):
    """Synthetic signal too short to supply the requested windows."""


class ClassTooSmallError(GafDiagError):
    """A class has too few samples to be split."""


class ShapeMismatchError(GafDiagError):
    """Array shapes are inconsistent with the model or operation."""


class LabelDomainError(GafDiagError):
    """Classification labels outside the expected set."""


class NoForwardCacheError(GafDiagError):
    """backward() called without a preceding train-mode forward()."""


class EmptyDatasetError(GafDiagError):
    """Training requires at least one sample."""


class NoBatchNormError(GafDiagError):
    """Channel ranking requires at least one batch-norm layer."""


class RateOutOfRangeError(GafDiagError):
    """Pruning rate outside ``[0, 1)``."""


class PlanModelMismatchError(GafDiagError):
    """A prune plan was applied to a model it was not built for."""


class EmptyReportError(GafDiagError):
    """Optimal-rate selection needs at least one report row."""


class EmptyInputError(GafDiagError):
    """A metric received an empty prediction or feature vector."""


class DegenerateRectangleError(GafDiagError):
    """Polyline bounding rectangle has zero area."""


class InsufficientPointsError(GafDiagError):
    """Too few sweep levels to form a polyline."""


class SupportMismatchError(GafDiagError):
    """KL divergence between distributions of different support sizes."""


class LengthMismatchError(GafDiagError):
    """Two series that must share a length do not."""


class CheckpointError(GafDiagError):
    """Checkpoint file is missing, truncated, or not a GFD1 file."""


class ConfigError(GafDiagError):
    """Run configuration file is invalid."""
