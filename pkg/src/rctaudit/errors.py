"""Exception types shared across the package."""


class AuditError(Exception):
    """Base class for all errors raised by this package."""


class InputError(AuditError, ValueError):
    """Malformed user input (files, flags, inconsistent arguments)."""


class EmptyGroupError(AuditError, ValueError):
    """An operation required both a treatment and a control group."""


class DegenerateCovariateError(AuditError, ValueError):
    """A covariate has zero variance where a rescaling is required."""


class DegenerateCalibrationError(AuditError, ValueError):
    """Expected imbalance is zero, so admissibility is undefined."""


class NoAdmissiblePointError(AuditError):
    """No sweep point passed the admissibility filter (grid too coarse)."""


class NumericalError(AuditError):
    """The linear-program core could not make further reliable progress."""


class UnboundedModelError(AuditError):
    """The linear relaxation is unbounded below."""


class SizeExceededError(AuditError, ValueError):
    """An exhaustive routine was asked to enumerate too large a space."""
