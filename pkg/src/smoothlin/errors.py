"""Exception types raised by the toolkit.

Every failure mode that a caller can act on gets its own class; generic
numpy/scipy errors are allowed to propagate only for genuine bugs.
"""


class SmoothlinError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SmoothlinError):
    """Bad or inconsistent run configuration."""


# -- spectral -------------------------------------------------------------

class EmptySpectrum(SmoothlinError):
    """No moduli were supplied."""


class NonHyperbolic(SmoothlinError):
    """A modulus lies on (or numerically at) the unit circle."""


class NotMixed(SmoothlinError):
    """Operation needs both contractive and expansive bands."""


class TargetTooTight(SmoothlinError):
    """Requested operator-norm target is below the spectral radius."""


class KTooSmall(SmoothlinError):
    """Adapted-norm term count cannot certify the target.

    Attributes:
        required: smallest term count that works (None if none found).
    """

    def __init__(self, msg, required=None):
        super().__init__(msg)
        self.required = required


# -- exponents ------------------------------------------------------------

class HypothesisViolated(SmoothlinError):
    """rho * tau1 >= 1 in the series-exponent evaluation."""


class NonpositiveResult(SmoothlinError):
    """A closed-form exponent evaluated to a nonpositive number."""


class ConditionViolated(SmoothlinError):
    """A spectral condition required by the formula fails."""


class NonpositiveExponent(SmoothlinError):
    """An exponent recursion step produced a value <= 0."""


# -- dynamics -------------------------------------------------------------

class EtaNotAchievable(SmoothlinError):
    """Bump modification cannot reach the requested derivative bound.

    Attributes:
        achieved: the smallest bound realized with the given radii.
    """

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


class OriginUndefined(SmoothlinError):
    """The sector step function has no value at the origin."""


class LeftDomain(SmoothlinError):
    """An orbit left the map's domain box.

    Attributes:
        step: iteration index at which the orbit escaped.
    """

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class OutsideBox(SmoothlinError):
    """A grid function was evaluated outside its box (strict mode)."""


# -- Lyapunov-Perron solver -----------------------------------------------

class EtaTooLarge(SmoothlinError):
    """Estimated contraction factor of the sequence operator is >= 1."""


class TailTooShort(SmoothlinError):
    """Truncation tail bound exceeds the requested tolerance budget."""


class NoConvergence(SmoothlinError):
    """An iteration hit its cap before reaching tolerance."""


class DerivativeMismatch(SmoothlinError):
    """Fiber fixed point disagrees with the finite-difference derivative."""


class InverseNewtonFailed(SmoothlinError):
    """Newton inversion of the map failed to converge."""


# -- cascade / hyperbolic -------------------------------------------------

class GraphLeavesBox(SmoothlinError):
    """Graph-transform iterate needs the map outside its domain box."""


class BandConditionViolated(SmoothlinError):
    """The per-band contraction condition fails (eta >= 1)."""


class SlowDecay(SmoothlinError):
    """Measured limit decay is far slower than the predicted rate."""


class NewtonFailed(SmoothlinError):
    """Pointwise Newton solve inside a transform failed."""


class LeafIntersectionFailed(SmoothlinError):
    """Could not intersect a foliation leaf with a coordinate axis."""


class InsufficientVariation(SmoothlinError):
    """Field is numerically constant; no exponent can be fitted."""
