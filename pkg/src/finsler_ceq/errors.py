"""Exception hierarchy shared by all modules."""


class FinslerCeqError(Exception):
    """Base class for every error raised by this package."""

    code = "ERROR"


class EvalDomainError(FinslerCeqError):
    code = "EVAL_DOMAIN"


class ShiftSingularError(FinslerCeqError):
    code = "SHIFT_SINGULAR"


class PivotLostError(FinslerCeqError):
    """The pivot coefficient f_ij vanished at a shifted point.

    ``index`` is the coordinate l of the shifted vector w_l = v - eps*e_l
    that failed, or None when the base vector itself lost the pivot.
    """

    code = "PIVOT_LOST"

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class VerticalContactError(FinslerCeqError):
    code = "VERTICAL_CONTACT"


class RankAnomalyError(FinslerCeqError):
    code = "RANK_ANOMALY"

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class SpecInvalidError(FinslerCeqError):
    code = "SPEC_INVALID"


class NotConvexError(FinslerCeqError):
    code = "NOT_CONVEX"


class ConfigInvalidError(FinslerCeqError):
    """Raised by the CLI layer; ``path`` names the offending config field."""

    code = "CONFIG_INVALID"

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
