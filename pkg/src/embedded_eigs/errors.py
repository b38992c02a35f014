"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front-end:
2 for invalid input or configuration, 3 for a tripped numerical guard.
"""


class EmbeddedEigError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ConfigInvalid(EmbeddedEigError):
    pass


class NoRoot(EmbeddedEigError):
    pass


class CriticalPoint(EmbeddedEigError):
    pass


class UnsupportedKind(EmbeddedEigError):
    pass


class EmptySupport(EmbeddedEigError):
    pass


class NotEven(EmbeddedEigError):
    pass


class CurvatureMismatch(EmbeddedEigError):
    pass


class ConditionFailed(EmbeddedEigError):
    pass


class CutoffOverlap(EmbeddedEigError):
    pass


class ZeroGapTooSmall(EmbeddedEigError):
    pass


class NonCompact(EmbeddedEigError):
    pass


class ThresholdViolated(EmbeddedEigError):
    pass


class NumericalGuard(EmbeddedEigError):
    """A numerical safeguard refused to continue."""

    exit_code = 3


class NonFinite(NumericalGuard):
    pass


class SymbolSingular(NumericalGuard):
    pass


class AllMasked(NumericalGuard):
    pass


class BoxTooSmall(NumericalGuard):
    pass


class GridTooCoarse(NumericalGuard):
    pass


class LowerBoundFailed(NumericalGuard):
    pass


class CliffordViolation(NumericalGuard):
    pass


class CoverGap(NumericalGuard):
    pass


class TailTooFat(NumericalGuard):
    pass
