"""Exception types raised by the library.

Breakdown conditions are first-class signals here: callers routinely catch
them and react (retry with a new seed, flag a degree in a sweep) rather than
treat them as fatal.
"""


class DtnCompressError(Exception):
    """Base class for all library errors."""


class BreakdownError(DtnCompressError):
    """A Krylov-type recurrence terminated before reaching full length."""


class LuckyBreakdownError(BreakdownError):
    """A new direction was (numerically) linearly dependent on the basis.

    "Lucky" in the sense that an invariant subspace was found; for the
    fixed-length expansions used here it still aborts the requested run.
    """


class SeriousBreakdownError(BreakdownError):
    """A biorthogonality inner product collapsed in two-sided Lanczos.

    Retryable: re-running the originating fit with a different starting
    vector typically avoids the breakdown.
    """


class SingularPencilError(DtnCompressError):
    """The matrix pencil is singular (its determinant vanishes identically)."""


class ReduciblePencilError(DtnCompressError):
    """A pencil transformation produced a shared zero subdiagonal."""


class NearPoleError(DtnCompressError):
    """An evaluation point fell (numerically) on a pole."""


class ClusteredPolesError(DtnCompressError):
    """Poles are too close together for contour-based residue extraction."""


class NonFiniteMisfitError(DtnCompressError):
    """A fit misfit evaluated to a non-finite value."""


class EigenvalueCollisionError(DtnCompressError):
    """A requested shift coincides with an eigenvalue of the operator."""


class ConversionError(DtnCompressError):
    """The pencil-to-grid conversion violated a structural guarantee."""


class PoleCountError(DtnCompressError):
    """A resonance count fell outside its analytic bracket."""


class SemidefiniteOperatorError(DtnCompressError):
    """The operator spectrum does not straddle zero."""


class InsufficientDataError(DtnCompressError):
    """Not enough usable data points for a requested fit."""
