"""Exception types raised by the simulation and statistics layers."""


class KineticFlowError(Exception):
    """Base class for all package errors."""


class InvalidCutoffError(KineticFlowError):
    """Mode cutoff must be a positive integer."""


class ResolutionError(KineticFlowError):
    """Quadrature grid too coarse for the requested frequencies (aliasing)."""


class TruncationError(KineticFlowError):
    """Output mode table cannot represent all bracket frequencies."""


class InvalidExponentError(KineticFlowError):
    """Roughness exponent outside the admissible range."""


class InvalidStepError(KineticFlowError):
    """Non-positive or unstable time step."""


class StepFailureError(KineticFlowError):
    """An SDE step produced a degenerate state; reduce dt."""


class DegenerateNormError(KineticFlowError):
    """Lift process norm fell below the numerical floor."""


class UnsupportedDimensionError(KineticFlowError):
    """Operation requires a higher ambient dimension."""


class ConditionViolatedError(KineticFlowError):
    """Trace condition margin is not positive; the mixing bound is not claimed."""


class HorizonTooShortError(KineticFlowError):
    """Autocovariance curve has not decayed below the noise floor."""


class GridError(KineticFlowError):
    """Incompatible or non-nested time grids."""


class DimensionMismatchError(KineticFlowError):
    """Array dimensions do not match the mode table."""
