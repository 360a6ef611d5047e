"""Spectral band analysis of the linear part at a hyperbolic fixed point.

Clusters eigenvalue moduli into bands separated by ratio gaps, checks the
band-width / spectral-gap inequalities that the linearization machinery
needs, and constructs adapted norms under which each band block realizes
its spectral bounds as operator-norm bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (EmptySpectrum, KTooSmall, NonHyperbolic, NotMixed,
                     TargetTooTight)

UNIT_CIRCLE_TOL = 1e-9
DEFAULT_GAP_THRESHOLD = 0.2


@dataclass(frozen=True)
class SpectralBand:
    """Closed modulus interval [lambda_minus, lambda_plus] of one band."""

    lambda_minus: float
    lambda_plus: float

    def __post_init__(self):
        if not (0.0 < self.lambda_minus <= self.lambda_plus):
            raise ValueError("band must satisfy 0 < lambda_minus <= lambda_plus")
        if self.lambda_minus <= 1.0 <= self.lambda_plus:
            raise NonHyperbolic("band interval contains 1")

    @property
    def ratio(self):
        return self.lambda_plus / self.lambda_minus

    @property
    def contractive(self):
        return self.lambda_plus < 1.0


@dataclass(frozen=True)
class SpectrumDecomposition:
    """Ordered band structure with split index d (count of bands below 1)."""

    bands: tuple

    def __post_init__(self):
        if not self.bands:
            raise EmptySpectrum("no bands")
        for a, b in zip(self.bands, self.bands[1:]):
            if not a.lambda_plus < b.lambda_minus:
                raise ValueError("bands must be strictly ordered and disjoint")

    @property
    def m(self):
        return len(self.bands)

    @property
    def d(self):
        return sum(1 for b in self.bands if b.contractive)

    @property
    def mixed(self):
        return 0 < self.d < self.m

    @property
    def contractive_bands(self):
        return self.bands[:self.d]

    @property
    def expansive_bands(self):
        return self.bands[self.d:]

    def envelopes(self):
        """(ls_minus, ls_plus, lu_minus, lu_plus) with None for absent sides."""
        ls_minus = ls_plus = lu_minus = lu_plus = None
        if self.d > 0:
            ls_minus = self.bands[0].lambda_minus
            ls_plus = self.bands[self.d - 1].lambda_plus
        if self.d < self.m:
            lu_minus = self.bands[self.d].lambda_minus
            lu_plus = self.bands[-1].lambda_plus
        return ls_minus, ls_plus, lu_minus, lu_plus

    def min_gap(self):
        """Smallest absolute gap between consecutive bands and the unit circle."""
        gaps = []
        for a, b in zip(self.bands, self.bands[1:]):
            gaps.append(b.lambda_minus - a.lambda_plus)
        for b in self.bands:
            gaps.append(abs(1.0 - b.lambda_plus))
            gaps.append(abs(b.lambda_minus - 1.0))
        gaps.append(self.bands[0].lambda_minus)
        return min(gaps)

    def all_moduli(self):
        out = []
        for b in self.bands:
            out.append(b.lambda_minus)
            if b.lambda_plus != b.lambda_minus:
                out.append(b.lambda_plus)
        return out


@dataclass(frozen=True)
class Margins:
    """Per-band margins mu_i = lambda_i -/+ delta and side envelopes."""

    decomposition: SpectrumDecomposition
    delta: float
    mu_minus: tuple = field(init=False, default=())
    mu_plus: tuple = field(init=False, default=())

    def __post_init__(self):
        dec = self.decomposition
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.delta >= 0.5 * dec.min_gap():
            raise ValueError("delta too large: margin intervals would overlap")
        object.__setattr__(self, "mu_minus",
                           tuple(b.lambda_minus - self.delta for b in dec.bands))
        object.__setattr__(self, "mu_plus",
                           tuple(b.lambda_plus + self.delta for b in dec.bands))

    @classmethod
    def default(cls, dec, delta=None):
        if delta is None:
            delta = 1e-3 * dec.min_gap()
        return cls(dec, float(delta))

    def envelopes(self):
        """delta-padded side envelopes (ls-, ls+, lu-, lu+)."""
        dec = self.decomposition
        ls_minus = ls_plus = lu_minus = lu_plus = None
        if dec.d > 0:
            ls_minus = self.mu_minus[0]
            ls_plus = self.mu_plus[dec.d - 1]
        if dec.d < dec.m:
            lu_minus = self.mu_minus[dec.d]
            lu_plus = self.mu_plus[-1]
        return ls_minus, ls_plus, lu_minus, lu_plus


# -- clustering -------------------------------------------------------------


def cluster_eigenvalues(moduli, gap_threshold=DEFAULT_GAP_THRESHOLD,
                        unit_tol=UNIT_CIRCLE_TOL):
    """Cluster eigenvalue moduli into spectral bands.

    Consecutive sorted moduli whose ratio is <= 1 + gap_threshold share a
    band (equality merges).  A split is always forced across the unit
    circle, and a modulus within unit_tol of 1 is rejected as
    non-hyperbolic.  Note that chained merges can produce a band whose
    total width ratio exceeds 1 + gap_threshold; re-clustering the band
    envelopes is only guaranteed to be stable when that does not happen.
    """
    mods = sorted(float(x) for x in np.atleast_1d(np.asarray(moduli, float)))
    if not mods:
        raise EmptySpectrum("spectrum input is empty")
    if any(x <= 0 for x in mods):
        raise ValueError("moduli must be positive")
    for x in mods:
        if abs(x - 1.0) <= unit_tol:
            raise NonHyperbolic(f"modulus {x!r} on the unit circle")
    bands = []
    lo = hi = mods[0]
    for x in mods[1:]:
        crosses_one = hi < 1.0 < x
        if x / hi <= 1.0 + gap_threshold and not crosses_one:
            hi = x
        else:
            bands.append(SpectralBand(lo, hi))
            lo = hi = x
    bands.append(SpectralBand(lo, hi))
    return SpectrumDecomposition(tuple(bands))


def decomposition_from_bands(intervals):
    """Build a decomposition directly from (lo, hi) band intervals."""
    bands = tuple(SpectralBand(float(lo), float(hi)) for lo, hi in intervals)
    return SpectrumDecomposition(tuple(sorted(bands, key=lambda b: b.lambda_minus)))


# -- condition checks ---------------------------------------------------------


@dataclass(frozen=True)
class BandCheck:
    band_index: int
    ratio: float
    bound: float

    @property
    def passed(self):
        return self.ratio < self.bound

    @property
    def slack(self):
        return self.bound - self.ratio


def check_band_condition(dec):
    """Band-width condition: every band ratio beats its side's bound.

    Contractive bands must satisfy ratio < 1/lambda_top+ where lambda_top+
    is the supremum of the contractive side; expansive bands must satisfy
    ratio < lambda_bottom- with the infimum of the expansive side.  Returns
    (passed, [BandCheck...]).
    """
    rows = []
    ls_minus, ls_plus, lu_minus, lu_plus = dec.envelopes()
    for i, band in enumerate(dec.bands):
        if band.contractive:
            bound = 1.0 / ls_plus
        else:
            bound = lu_minus
        rows.append(BandCheck(i, band.ratio, bound))
    return all(r.passed for r in rows), rows


def check_gap_condition(dec, margins=None):
    """Spectral gap condition lu-/ls+ > max(lu+, 1/ls-).

    With margins the delta-padded envelopes are used; without, the raw
    band envelopes (the delta -> 0 limit).  Returns (passed, report dict).
    """
    if not dec.mixed:
        raise NotMixed("gap condition needs both contractive and expansive bands")
    env = margins.envelopes() if margins is not None else dec.envelopes()
    ls_minus, ls_plus, lu_minus, lu_plus = env
    lhs = lu_minus / ls_plus
    rhs = max(lu_plus, 1.0 / ls_minus)
    report = {"lhs": lhs, "rhs": rhs, "slack": lhs - rhs}
    return lhs > rhs, report


def check_rs_condition(dec):
    """Stronger two-band condition, for comparison reporting only.

    Requires the gap inequality plus narrow side bands:
    ls+/ls- < 1/ls+ and lu+/lu- < lu-.
    """
    if not dec.mixed:
        raise NotMixed("condition needs a mixed spectrum")
    ls_minus, ls_plus, lu_minus, lu_plus = dec.envelopes()
    first = lu_minus / ls_plus > max(lu_plus, 1.0 / ls_minus)
    second = ls_plus / ls_minus < 1.0 / ls_plus
    third = lu_plus / lu_minus < lu_minus
    return first and second and third


def check_foliation_condition(dec, margins=None):
    """Leaf-smoothness condition ls+ * lu+ < lu-."""
    if not dec.mixed:
        raise NotMixed("condition needs a mixed spectrum")
    env = margins.envelopes() if margins is not None else dec.envelopes()
    ls_minus, ls_plus, lu_minus, lu_plus = env
    return ls_plus * lu_plus < lu_minus


def check_dual_foliation_condition(dec, margins=None):
    """Foliation condition for the inverse map: ls+ < ls- * lu-."""
    if not dec.mixed:
        raise NotMixed("condition needs a mixed spectrum")
    env = margins.envelopes() if margins is not None else dec.envelopes()
    ls_minus, ls_plus, lu_minus, lu_plus = env
    return ls_plus < ls_minus * lu_minus


def check_all_conditions(dec, margins=None):
    """Full precondition set for the hyperbolic pipeline.

    Returns a dict with each named check and an overall flag.  The pure
    contraction / expansion cases only need the band condition.
    """
    band_ok, band_rows = check_band_condition(dec)
    out = {
        "band_condition": band_ok,
        "band_rows": band_rows,
        "mixed": dec.mixed,
    }
    if dec.mixed:
        gap_ok, gap_report = check_gap_condition(dec, margins)
        out["gap_condition"] = gap_ok
        out["gap_report"] = gap_report
        out["foliation_condition"] = check_foliation_condition(dec, margins)
        out["dual_foliation_condition"] = check_dual_foliation_condition(dec, margins)
        out["rs_condition"] = check_rs_condition(dec)
        out["overall"] = band_ok and gap_ok
    else:
        out["overall"] = band_ok
    return out


# -- adapted norms ------------------------------------------------------------


class AdaptedNorm:
    """Norm ||x||_* = sum_k rho^{-k} ||A^k x||_2 with certified bound.

    Under this norm the operator norm of A is <= rho, provided
    ||A^{K+1}||_2 <= rho^{K+1}, which the constructor certifies.
    """

    def __init__(self, block, rho, n_terms):
        self.block = np.asarray(block, dtype=float)
        self.rho = float(rho)
        self.n_terms = int(n_terms)
        powers = [np.eye(self.block.shape[0])]
        for _ in range(self.n_terms):
            powers.append(powers[-1] @ self.block)
        self.powers = powers
        self.weights = [self.rho ** (-k) for k in range(self.n_terms + 1)]

    def norm(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(x.shape[0])
        for w, p in zip(self.weights, self.powers):
            total += w * np.linalg.norm(x @ p.T, axis=1)
        return total if total.size > 1 else float(total[0])

    def operator_ratio(self, x):
        """||A x||_* / ||x||_* for one or many vectors."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.norm(x @ self.block.T) / self.norm(x)


def adapted_norm(block, target, k_terms, max_k=2000):
    """Construct an AdaptedNorm certifying operator norm <= target.

    Raises TargetTooTight when the spectral radius is >= target and
    KTooSmall (with the required count) when k_terms does not certify the
    bound.
    """
    block = np.asarray(block, dtype=float)
    target = float(target)
    radius = max(abs(np.linalg.eigvals(block)))
    if radius >= target:
        raise TargetTooTight(
            f"spectral radius {radius:.6g} >= target {target:.6g}")
    power = np.eye(block.shape[0])
    required = None
    for k in range(max_k + 1):
        power = power @ block
        if np.linalg.norm(power, 2) <= target ** (k + 1):
            required = k
            break
    if required is None:
        raise KTooSmall(f"no certifying term count below {max_k}", required=None)
    if k_terms < required:
        raise KTooSmall(
            f"k_terms={k_terms} too small, need {required}", required=required)
    return AdaptedNorm(block, target, k_terms)


def adapted_coordinates(block, rho_plus, rho_minus, max_k=2000):
    """Similarity T with ||T A T^-1||_2 <= rho_plus, ||T A^-1 T^-1||_2 <= 1/rho_minus.

    Built from the quadratic form sum_k rho_plus^{-2k} (A^k)^T A^k +
    sum_k rho_minus^{2k} (A^-k)^T A^-k; T is its matrix square root.
    Returns (T, T_inverse).
    """
    block = np.asarray(block, dtype=float)
    n = block.shape[0]
    evals = np.abs(np.linalg.eigvals(block))
    if evals.max() >= rho_plus or evals.min() <= rho_minus:
        raise TargetTooTight("spectral bounds do not bracket the block spectrum")
    inv = np.linalg.inv(block)
    gram = np.zeros((n, n))
    fwd = np.eye(n)
    bwd = np.eye(n)
    for k in range(max_k + 1):
        gram += rho_plus ** (-2 * k) * fwd.T @ fwd
        if k >= 1:
            gram += rho_minus ** (2 * k) * bwd.T @ bwd
        fwd = fwd @ block
        bwd = bwd @ inv
        if (np.linalg.norm(fwd, 2) <= rho_plus ** (k + 1)
                and np.linalg.norm(bwd, 2) <= rho_minus ** (-(k + 1))):
            break
    t_mat = scipy.linalg.sqrtm(gram).real
    t_inv = np.linalg.inv(t_mat)
    a_new = t_mat @ block @ t_inv
    # widen by the tiny sqrtm round-off so callers can trust the bounds
    if np.linalg.norm(a_new, 2) > rho_plus * (1 + 1e-9):
        raise TargetTooTight("adapted coordinates failed forward bound")
    if np.linalg.norm(np.linalg.inv(a_new), 2) > (1 + 1e-9) / rho_minus:
        raise TargetTooTight("adapted coordinates failed backward bound")
    return t_mat, t_inv


# -- real block-diagonal form --------------------------------------------------


class LinearPart:
    """Block-diagonal real form of the linear part, one block per band.

    Provides the change of basis P with P^-1 Lambda P = diag(B_1..B_m),
    per-band projections in the original frame, and per-band adapted
    coordinate scalings realizing the margin bounds.
    """

    def __init__(self, matrix, decomposition, basis, blocks, margins=None):
        self.matrix = np.asarray(matrix, dtype=float)
        self.decomposition = decomposition
        self.basis = basis              # P: block coords -> original coords
        self.basis_inv = np.linalg.inv(basis)
        self.blocks = blocks            # list of per-band square blocks
        self.margins = margins
        sizes = [b.shape[0] for b in blocks]
        self.band_slices = []
        start = 0
        for s in sizes:
            self.band_slices.append(slice(start, start + s))
            start += s
        self.dimension = start
        d = decomposition.d
        self.minus_dim = sum(sizes[:d])
        self.plus_dim = self.dimension - self.minus_dim

    @classmethod
    def from_matrix(cls, matrix, gap_threshold=DEFAULT_GAP_THRESHOLD,
                    decomposition=None, delta=None):
        matrix = np.asarray(matrix, dtype=float)
        evals = np.linalg.eigvals(matrix)
        if decomposition is None:
            decomposition = cluster_eigenvalues(np.abs(evals), gap_threshold)
        # recursive real Schur sorts: bring each band to the leading block
        remaining = matrix.copy()
        basis = np.eye(matrix.shape[0])
        offset = 0
        boundaries = [0]
        for band in decomposition.bands[:-1]:
            sub = remaining[offset:, offset:]

            def in_band(re, im, lo=band.lambda_minus, hi=band.lambda_plus):
                mod = np.hypot(re, im)
                return (mod >= lo * (1 - 1e-9)) & (mod <= hi * (1 + 1e-9))

            t_mat, z_mat, sdim = scipy.linalg.schur(sub, sort=in_band)
            remaining[offset:, offset:] = t_mat
            # apply the orthogonal update to trailing coordinates of the basis
            q_full = np.eye(matrix.shape[0])
            q_full[offset:, offset:] = z_mat
            basis = basis @ q_full
            remaining[:offset, offset:] = remaining[:offset, offset:] @ z_mat
            offset += sdim
            boundaries.append(offset)
        boundaries.append(matrix.shape[0])
        # zero the off-diagonal coupling blocks via Sylvester solves
        n_bands = decomposition.m
        coupled = remaining
        full = np.eye(matrix.shape[0])
        for i in range(n_bands - 1, 0, -1):
            lo = boundaries[i]
            a11 = coupled[:lo, :lo]
            a12 = coupled[:lo, lo:]
            a22 = coupled[lo:, lo:]
            x = scipy.linalg.solve_sylvester(a11, -a22, -a12)
            s_mat = np.eye(matrix.shape[0])
            s_mat[:lo, lo:] = x
            s_inv = np.eye(matrix.shape[0])
            s_inv[:lo, lo:] = -x
            coupled = s_inv @ coupled @ s_mat
            full = full @ s_mat
        basis = basis @ full
        blocks = [coupled[boundaries[i]:boundaries[i + 1],
                          boundaries[i]:boundaries[i + 1]].copy()
                  for i in range(n_bands)]
        margins = Margins.default(decomposition, delta)
        return cls(matrix, decomposition, basis, blocks, margins)

    def projection(self, band_index):
        """Spectral projection onto one band, in the original frame."""
        e_mat = np.zeros((self.dimension, self.dimension))
        sl = self.band_slices[band_index]
        e_mat[sl, sl] = np.eye(sl.stop - sl.start)
        return self.basis @ e_mat @ self.basis_inv

    def projection_minus(self):
        return sum(self.projection(i) for i in range(self.decomposition.d))

    def projection_plus(self):
        return sum(self.projection(i)
                   for i in range(self.decomposition.d, self.decomposition.m))

    def block_diagonal(self):
        return scipy.linalg.block_diag(*self.blocks)

    def adapted_scalings(self):
        """Per-band similarity transforms realizing the margin bounds."""
        out = []
        for i, block in enumerate(self.blocks):
            mu_plus = self.margins.mu_plus[i]
            mu_minus = self.margins.mu_minus[i]
            out.append(adapted_coordinates(block, mu_plus, mu_minus))
        return out

    def commutation_residual(self):
        """max_i || pi_i Lambda - Lambda pi_i || (should be ~ round-off)."""
        worst = 0.0
        for i in range(self.decomposition.m):
            p = self.projection(i)
            worst = max(worst, np.linalg.norm(p @ self.matrix - self.matrix @ p))
        return worst
