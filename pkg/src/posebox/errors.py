"""Exception types raised across the toolkit.

Everything derives from :class:`PoseboxError` so callers can catch the
whole family with one except clause.  Each subclass marks one failure
mode; the message carries the offending values.
"""


class PoseboxError(Exception):
    """Base class for all toolkit errors."""


class NonFiniteError(PoseboxError):
    """An input contained NaN or infinity."""


class NonPositiveDepthError(PoseboxError):
    """A point had camera-frame depth z <= 0 where positive depth is required."""


class DimensionMismatchError(PoseboxError):
    """Array or vector dimensions do not agree."""


class DuplicateIdError(PoseboxError):
    """Instance ids passed to a renderer were not unique."""


class FullyBehindCameraError(PoseboxError):
    """Every relevant point of a box lies behind the near plane."""


class DegenerateProjectionError(PoseboxError):
    """Projected points are too few or collinear to span an area."""


class BandCountZeroError(PoseboxError):
    """A frequency embedding was requested with fewer than one band."""


class UnknownTargetIdError(PoseboxError):
    """A target instance id is absent from the supplied box list."""


class SizeMismatchError(PoseboxError):
    """Two rasters or a raster and a spec disagree on pixel dimensions."""


class NonPositiveFactorError(PoseboxError):
    """A scale factor was zero or negative."""


class DegenerateRectError(PoseboxError):
    """A 2D rectangle has no extent to crop around."""


class ParseError(PoseboxError):
    """A file could not be decoded (bad JSON, bad magic, bad version)."""


class SchemaViolationError(PoseboxError):
    """A decoded record is missing fields or holds out-of-range values."""


class DanglingReferenceError(PoseboxError):
    """A record references a frame token that does not exist."""


class EmptyDrivableRegionError(PoseboxError):
    """A drivable polygon has no area to sample points from."""


class OutOfRangeError(PoseboxError):
    """A scalar argument lies outside its documented domain."""


class TooFewSamplesError(PoseboxError):
    """A feature set holds fewer rows than the statistic requires."""
