"""Exception hierarchy shared by the qsmc modules."""


class QSMCError(Exception):
    """Base class for all qsmc errors."""


class FieldEvaluationError(QSMCError, ArithmeticError):
    """A scalar field (or a quantity derived from one) evaluated to a non-finite value."""

    def __init__(self, field, point=None, detail=""):
        self.field = field
        self.point = point
        msg = f"non-finite value from field {field!r}"
        if point is not None:
            msg += f" at {point}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConfigurationError(QSMCError, ValueError):
    """Invalid combination of options (scheme, dimensions, config keys)."""


class ParameterError(QSMCError, ValueError):
    """Model parameters outside their admissible range."""


class ShiftSearchError(QSMCError):
    """The search for the infimum of the raw killing rate failed."""


class ToleranceError(ShiftSearchError):
    """A refinement did not reach the requested tolerance."""


class KillingConstructionError(QSMCError, ValueError):
    """The shifted killing rate is negative somewhere on the validation grid."""


class ContractViolation(QSMCError, ValueError):
    """An input broke an operation's precondition (e.g. negative hazard)."""


class WindowError(QSMCError, ValueError):
    """A rate-fit window contains too few or non-positive values."""


class EmptySampleError(QSMCError, ValueError):
    """A statistic was requested on too few samples."""


class NumericError(QSMCError, ArithmeticError):
    """An eigen-solve or other numerical routine failed its accuracy check."""


class InapplicableBoundError(QSMCError):
    """The convergence bound requires a finite reversing measure."""


class ExtinctionError(QSMCError):
    """Every replica was killed before the first checkpoint."""
