"""Exception types shared across the package."""


class DcatuneError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(DcatuneError, ValueError):
    """Malformed user input: dimension mismatch, bad options, bad data."""


class StateError(DcatuneError, RuntimeError):
    """An operation was called on state that is missing required pieces
    (e.g. an iterate without multipliers)."""


class UnsupportedPieceError(DcatuneError):
    """No lowering rule exists for this piece in this position."""


class SolverFailureError(DcatuneError, RuntimeError):
    """Numerical breakdown inside the convex kernel."""


class DualsUnavailableError(StateError):
    """Dual extraction requested from a non-optimal solve."""


class BoundaryProbeError(DcatuneError, ValueError):
    """Value-function probe requested at a boundary point where the
    one-sided difference quotient is not reliable."""
