"""Error types shared across the toolkit.

The gateway maps these onto machine-readable API error codes, so keep the
hierarchy flat and the meanings crisp.
"""


class TexannotError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class ValidationError(TexannotError, ValueError):
    """An argument violates a declared precondition."""

    code = "validation"


class ImageTooSmallError(ValidationError):
    """Image is smaller than the sliding window in at least one dimension."""

    code = "image-too-small"


class BoundsError(ValidationError):
    """A rectangle or polygon reaches outside its raster."""

    code = "bounds"


class DegenerateHullError(ValidationError):
    """Convex hull requested for all-collinear input points."""

    code = "degenerate-hull"


class IncompatibilityError(TexannotError):
    """Model and featurizer (or roster) do not fit together."""

    code = "incompatibility"


class ConfigurationError(TexannotError):
    """A configuration leaves nothing valid to do (e.g. zero classes)."""

    code = "configuration"


class GenerationError(TexannotError):
    """Synthetic scene generation cannot satisfy its constraints."""

    code = "generation"


class IntegrityError(TexannotError):
    """A record references something that does not exist."""

    code = "integrity"


class ConflictError(TexannotError):
    """A write collides with an existing decision or record."""

    code = "conflict"


class NotFoundError(TexannotError):
    """Lookup of a record or file that is not in the store."""

    code = "not-found"
