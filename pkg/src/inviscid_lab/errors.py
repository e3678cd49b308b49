"""Exception types shared across the laboratory modules."""


class InviscidLabError(Exception):
    """Base class for all errors raised by this package."""


class NonZeroMean(InviscidLabError):
    """A mean-zero field was required but the input carries a nonzero mean."""


class GridMismatch(InviscidLabError):
    """Operands live on different grids."""


class BadExponent(InviscidLabError):
    """Integrability exponent outside the admissible range."""


class CflViolation(InviscidLabError):
    """Advective CFL guard dt <= 0.5 * spacing / max|u| failed."""


class TimeRangeExceeded(InviscidLabError):
    """Requested time lies outside the carrier trajectory's horizon."""


class BadParams(InviscidLabError):
    """Parameter combination outside the documented domain."""


class StochasticFlowNotAllowed(InviscidLabError):
    """Operation is defined for deterministic flows only."""


class DeterministicFlowNotAllowed(InviscidLabError):
    """Operation is defined for stochastic flows only."""


class MismatchedEnsembles(InviscidLabError):
    """Two flow ensembles do not share seeds, release time, or sample times."""


class BadEps(InviscidLabError):
    """The log-distance parameter must be strictly positive."""


class BadAlpha(InviscidLabError):
    """Comparison-lemma initial value must lie in (0, 1)."""


class InsufficientPoints(InviscidLabError):
    """Rate fitting needs at least three ladder points."""


class NonPositiveError(InviscidLabError):
    """Power-law fitting needs strictly positive error values."""


class BadBeta(InviscidLabError):
    """Renormalization test function must vanish in a neighbourhood of zero."""


class BadRadii(InviscidLabError):
    """Cutoff radii must satisfy 0 < 2r < R."""


class SupportViolation(InviscidLabError):
    """Field support exceeds the safe margin of the free-space box."""


class ShapeMismatch(InviscidLabError):
    """Star-convolution operands have incompatible shapes."""


class HistoryGap(InviscidLabError):
    """Velocity-update histories are missing checkpoints."""


class BadCutoff(InviscidLabError):
    """Kernel cutoff radii do not fit inside the padded box."""


class UnknownDatum(InviscidLabError):
    """Requested initial datum is not in the library."""


class IoError(InviscidLabError):
    """Malformed container file or unwritable output location."""
