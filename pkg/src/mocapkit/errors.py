"""Exception types shared across the toolkit.

Everything raised on purpose derives from :class:`MocapError` so the CLI can
turn failures into structured output without guessing.
"""


class MocapError(Exception):
    """Base class for all toolkit errors."""

    code = "error"

    def payload(self):
        """Machine-readable form used by the CLI error stream."""
        return {"error": self.code, "message": str(self)}


class ValidationError(MocapError):
    """Input data or configuration violates a documented invariant."""

    code = "validation"


class DegenerateInputError(MocapError):
    """Geometry too degenerate to proceed (collinear/coincident points)."""

    code = "degenerate"


class VisibilityError(MocapError):
    """An operation required a visible marker that is occluded."""

    code = "visibility"


class NumericsError(MocapError):
    """A numeric computation produced non-finite values."""

    code = "numerics"
