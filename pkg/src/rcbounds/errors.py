"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: usage errors exit 1, domain and
precondition failures exit 2, verification failures exit 3 and
non-convergence exits 4.
"""


class RCBoundsError(Exception):
    exit_code = 2


class DomainError(RCBoundsError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(RCBoundsError, ValueError):
    """An input violates a stated precondition (e.g. non-centered variable)."""


class UnsupportedError(RCBoundsError):
    """The operation is not available for this input."""


class UnsupportedScoreError(UnsupportedError):
    """The family has no usable score function."""


class EstimationError(RCBoundsError):
    """An estimator could not be computed (no sign change, too many failures)."""


class NoBoundError(RCBoundsError):
    """The information quantity is zero or infinite, so no lower bound exists."""


class NonConvergenceError(RCBoundsError):
    exit_code = 4


class VerificationFailure(RCBoundsError):
    exit_code = 3
