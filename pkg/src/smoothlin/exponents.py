"""Closed-form Holder exponents guaranteed by the spectral conditions.

Implements the exponent of a weighted series of Holder maps, the
stable/unstable foliation exponents, the per-band cascade recursions for
contractions and expansions, the overall exponent for a hyperbolic
spectrum, and the planar two-eigenvalue formula.

All logarithms are natural; every formula is homogeneous in the log base.
Note: the piecewise sigma-form sometimes quoted for the planar exponent
assigns its branches inconsistently with direct evaluation of the
min-form; this module evaluates the min-form directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log

from .errors import (ConditionViolated, HypothesisViolated, NonpositiveExponent,
                     NonpositiveResult, NotMixed)
from .spectral import (SpectrumDecomposition, check_band_condition,
                       check_dual_foliation_condition, check_foliation_condition,
                       check_gap_condition)

DEFAULT_EPSILON = 1e-3
EQUALITY_RTOL = 1e-12


@dataclass(frozen=True)
class ExponentParams:
    """Knobs for the exponent formulas."""

    epsilon: float = DEFAULT_EPSILON
    decomposition: SpectrumDecomposition | None = None

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class ExponentReport:
    """All exponent constituents for one spectrum."""

    beta_sequence_contraction: tuple
    zeta_sequence_contraction: tuple
    beta_sequence_expansion: tuple
    zeta_sequence_expansion: tuple
    beta_s: float | None
    beta_u: float | None
    beta_overall: float
    epsilon: float

    def constituents(self):
        out = {}
        if self.beta_sequence_contraction:
            out["beta_contraction_first"] = self.beta_sequence_contraction[0]
        if self.beta_sequence_expansion:
            out["beta_expansion_last"] = self.beta_sequence_expansion[-1]
        if self.beta_s is not None:
            out["beta_s"] = self.beta_s
        if self.beta_u is not None:
            out["beta_u"] = self.beta_u
        return out


def series_beta(alpha, tau1, tau2, rho, epsilon=0.0):
    """Holder exponent of sum_k rho^k P_k with ||P_k|| <= M tau1^k and
    Holder-alpha seminorms growing like tau2^k.

    Requires rho * tau1 < 1.  Returns alpha when rho*tau2 < 1, alpha -
    epsilon at equality (relative tolerance 1e-12), and the interpolated
    exponent (log tau1 + log rho)/(log tau1 - log tau2) * alpha when
    rho*tau2 > 1.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if min(tau1, tau2, rho) <= 0.0:
        raise ValueError("tau1, tau2, rho must be positive")
    if rho * tau1 >= 1.0:
        raise HypothesisViolated(f"rho*tau1 = {rho * tau1:.6g} >= 1")
    prod = rho * tau2
    if abs(prod - 1.0) <= EQUALITY_RTOL:
        return alpha - epsilon
    if prod < 1.0:
        return alpha
    beta = (log(tau1) + log(rho)) / (log(tau1) - log(tau2)) * alpha
    if beta <= 0.0:
        raise NonpositiveResult(f"series exponent {beta:.6g} <= 0")
    return beta


def beta_stable(dec, epsilon=0.0):
    """Holder exponent of the stable-foliation derivative.

    (log ld+ + log lm+ - log l(d+1)-) / (log ld+ - log lm+) - epsilon,
    positive exactly when the foliation condition ls+ * lu+ < lu- holds.
    """
    if not dec.mixed:
        raise NotMixed("stable exponent needs a mixed spectrum")
    if not check_foliation_condition(dec):
        raise ConditionViolated("foliation condition ls+*lu+ < lu- fails")
    ls_minus, ls_plus, lu_minus, lu_plus = dec.envelopes()
    value = (log(ls_plus) + log(lu_plus) - log(lu_minus)) \
        / (log(ls_plus) - log(lu_plus)) - epsilon
    if value <= 0.0:
        raise NonpositiveResult("beta_s <= 0 for the chosen epsilon")
    return value


def beta_unstable(dec, epsilon=0.0):
    """Dual exponent for the unstable foliation.

    (log l(d+1)- + log l1- - log ld+) / (log l(d+1)- - log l1-) - epsilon.
    """
    if not dec.mixed:
        raise NotMixed("unstable exponent needs a mixed spectrum")
    if not check_dual_foliation_condition(dec):
        raise ConditionViolated("dual foliation condition ls+ < ls-*lu- fails")
    ls_minus, ls_plus, lu_minus, lu_plus = dec.envelopes()
    value = (log(lu_minus) + log(ls_minus) - log(ls_plus)) \
        / (log(lu_minus) - log(ls_minus)) - epsilon
    if value <= 0.0:
        raise NonpositiveResult("beta_u <= 0 for the chosen epsilon")
    return value


def _contraction_recursion(lams_minus, lams_plus, top_plus, epsilon):
    """Descending recursion over contractive bands.

    Bands are given ascending; the top band gets exponent 1 and each lower
    band ell gets
      zeta = min(beta_next, log l_ell+ / log l_(ell+1)- - 1 - eps)
      beta = min(zeta - eps,
                 (log l_ell+ + log top+ - log l_ell-)
                 / (log l_ell+ - zeta * log top+) * zeta - eps).
    Returns (betas ascending, zetas ascending).
    """
    n = len(lams_minus)
    betas = [0.0] * n
    zetas = [0.0] * (n - 1) if n > 1 else []
    betas[-1] = 1.0
    for i in range(n - 2, -1, -1):
        zeta = min(betas[i + 1],
                   log(lams_plus[i]) / log(lams_minus[i + 1]) - 1.0 - epsilon)
        if zeta <= 0.0:
            raise NonpositiveExponent(
                f"zeta <= 0 at band {i}: spectral gap too small for epsilon")
        ratio = (log(lams_plus[i]) + log(top_plus) - log(lams_minus[i])) \
            / (log(lams_plus[i]) - zeta * log(top_plus))
        beta = min(zeta - epsilon, ratio * zeta - epsilon)
        if beta <= 0.0:
            raise NonpositiveExponent(
                f"beta <= 0 at band {i}: band condition slack too small")
        zetas[i] = zeta
        betas[i] = beta
    return tuple(betas), tuple(zetas)


def beta_contraction(bands, epsilon=0.0, lambda_top=None):
    """Per-band exponents for a contraction cascade.

    bands: ascending contractive SpectralBands.  lambda_top overrides the
    top modulus (the hyperbolic pipeline passes the contractive envelope
    top when the full spectrum is mixed).  Returns (betas, zetas), betas
    ascending so betas[0] is the overall contraction exponent.
    """
    if not bands:
        raise ValueError("no contractive bands")
    for b in bands:
        if not b.contractive:
            raise ValueError("beta_contraction needs contractive bands")
    top = bands[-1].lambda_plus if lambda_top is None else float(lambda_top)
    lams_minus = [b.lambda_minus for b in bands]
    lams_plus = [b.lambda_plus for b in bands]
    return _contraction_recursion(lams_minus, lams_plus, top, epsilon)


def beta_expansion(bands, epsilon=0.0, lambda_bottom=None):
    """Per-band exponents for the expansive side (ascending recursion).

    Mirrors beta_contraction under the modulus inversion lam -> 1/lam.
    Returns (betas, zetas) indexed ascending with the band list, so
    betas[-1] is the overall expansion exponent.
    """
    if not bands:
        raise ValueError("no expansive bands")
    for b in bands:
        if b.contractive:
            raise ValueError("beta_expansion needs expansive bands")
    bottom = bands[0].lambda_minus if lambda_bottom is None else float(lambda_bottom)
    n = len(bands)
    betas = [0.0] * n
    zetas = [0.0] * (n - 1) if n > 1 else []
    betas[0] = 1.0
    for j in range(1, n):
        zeta = min(betas[j - 1],
                   log(bands[j].lambda_minus) / log(bands[j - 1].lambda_plus)
                   - 1.0 - epsilon)
        if zeta <= 0.0:
            raise NonpositiveExponent(
                f"zeta <= 0 at band {j}: spectral gap too small for epsilon")
        ratio = (log(bands[j].lambda_minus) + log(bottom)
                 - log(bands[j].lambda_plus)) \
            / (log(bands[j].lambda_minus) - zeta * log(bottom))
        beta = min(zeta - epsilon, ratio * zeta - epsilon)
        if beta <= 0.0:
            raise NonpositiveExponent(
                f"beta <= 0 at band {j}: band condition slack too small")
        zetas[j - 1] = zeta
        betas[j] = beta
    return tuple(betas), tuple(zetas)


def beta_overall(dec, epsilon=0.0):
    """Overall guaranteed Holder exponent for the full spectrum.

    Pure contraction: the first element of the contraction recursion.
    Pure expansion: the last element of the expansion recursion.  Mixed:
    the minimum of both factor exponents and the two foliation exponents,
    after verifying the band and gap conditions.
    """
    if dec.d == dec.m:
        betas, zetas = beta_contraction(dec.bands, epsilon)
        return ExponentReport(betas, zetas, (), (), None, None,
                              betas[0], epsilon)
    if dec.d == 0:
        betas, zetas = beta_expansion(dec.bands, epsilon)
        return ExponentReport((), (), betas, zetas, None, None,
                              betas[-1], epsilon)
    band_ok, _ = check_band_condition(dec)
    gap_ok, _ = check_gap_condition(dec)
    if not (band_ok and gap_ok):
        raise ConditionViolated("band or gap condition fails for this spectrum")
    ls_minus, ls_plus, lu_minus, lu_plus = dec.envelopes()
    betas_c, zetas_c = beta_contraction(dec.contractive_bands, epsilon,
                                        lambda_top=ls_plus)
    betas_e, zetas_e = beta_expansion(dec.expansive_bands, epsilon,
                                      lambda_bottom=lu_minus)
    bs = beta_stable(dec, epsilon)
    bu = beta_unstable(dec, epsilon)
    overall = min(betas_c[0], bs, betas_e[-1], bu)
    return ExponentReport(betas_c, zetas_c, betas_e, zetas_e, bs, bu,
                          overall, epsilon)


def beta_planar(lambda1, lambda2, epsilon=0.0):
    """Planar exponent min over the two log ratios, minus epsilon.

    Requires 0 < |lambda1| < 1 < |lambda2|.
    """
    l1 = abs(float(lambda1))
    l2 = abs(float(lambda2))
    if not (0.0 < l1 < 1.0 < l2):
        raise ValueError("need 0 < |lambda1| < 1 < |lambda2|")
    first = log(l1) / (log(l1) - log(l2))
    second = log(l2) / (log(l2) - log(l1))
    return min(first, second) - epsilon
