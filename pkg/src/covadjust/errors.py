"""Exception types raised across the package.

Every failure mode that callers may want to handle programmatically gets its
own class; all inherit from :class:`CovadjustError`. Validation routines that
check several invariants at once raise :class:`ValidationError` carrying the
full list of violations, or the specific subclass when only one kind of
violation occurred.
"""

from __future__ import annotations


class CovadjustError(Exception):
    """Base class for all package errors."""


class ValidationError(CovadjustError):
    """One or more input invariants violated.

    ``violations`` lists every violation found, so callers see the complete
    diagnostic rather than the first failure.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NonFiniteValue(ValidationError):
    """A response or covariate entry is NaN or infinite."""


class ArmLabelOutOfRange(ValidationError):
    """An arm label falls outside 1..k or is not an integer."""


class EmptyArm(ValidationError):
    """An arm in 1..k has no patients but the operation requires one."""


class TooFewRows(ValidationError):
    """Not enough rows for the requested moment computation."""


class TooFewPatients(CovadjustError):
    """An arm has too few patients for the requested estimate."""


class SingularDesign(CovadjustError):
    """A least-squares Gram matrix is numerically rank deficient."""


class SingularSigmaX(CovadjustError):
    """The population covariate covariance matrix is not positive definite."""


class NotAContrast(CovadjustError):
    """Coefficient vector does not sum to zero."""


class SingularContrastCovariance(CovadjustError):
    """The contrast covariance matrix of the homogeneity test is singular."""


class DomainError(CovadjustError):
    """Estimate falls outside the domain of the requested effect measure."""


class UnknownMargin(CovadjustError):
    """Minimization margins do not match the declared margin count."""


class UnknownStratum(CovadjustError):
    """A stratum label is absent from the population support."""


class MissingOmega(CovadjustError):
    """No assignment-covariance matrix supplied for a stratum."""


class BudgetExceeded(CovadjustError):
    """Exact enumeration requested beyond the supported problem size."""
