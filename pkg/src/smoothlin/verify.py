"""Empirical validation: residuals, Holder-exponent fits, diffeomorphism
checks and sharpness sweeps.

All sampling is seed-deterministic; every report records the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SmoothlinError


@dataclass
class HolderEstimate:
    """Least-squares exponent with its regression context."""

    exponent: float
    confidence: float             # 1.96 * slope standard error
    sep_lo: float
    sep_hi: float
    n_pairs: int
    constant_field: bool
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.exponent <= 1.05):
            raise ValueError("fitted exponent escaped [0, 1.05]")


def holder_exponent(field, center, radius_lo, radius_hi, n_pairs=400,
                    seed=0, dim=None):
    """Fit the Holder exponent of a (vector) field near a center.

    Pairs are drawn with log-uniform separations spanning the given
    range, both endpoints at the separation scale from the center, so
    every decade of separation contributes equally to the regression.
    A numerically constant field reports exponent 1 with a flag.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if dim is None:
        dim = center.size
    if radius_hi <= radius_lo or radius_lo <= 0:
        raise ValueError("need 0 < radius_lo < radius_hi")
    if radius_hi / radius_lo < 99.99:
        raise ValueError("separation range must span at least 2 decades")
    if n_pairs < 200:
        raise ValueError("need at least 200 pairs")
    rng = np.random.default_rng(seed)
    seps = np.exp(rng.uniform(np.log(radius_lo), np.log(radius_hi), n_pairs))
    dir_a = rng.standard_normal((n_pairs, dim))
    dir_a /= np.linalg.norm(dir_a, axis=1, keepdims=True)
    dir_b = rng.standard_normal((n_pairs, dim))
    dir_b /= np.linalg.norm(dir_b, axis=1, keepdims=True)
    base = center + dir_a * (seps * rng.uniform(0.0, 2.0, n_pairs))[:, None]
    mate = base + dir_b * seps[:, None]
    va = np.asarray(field(base), dtype=float).reshape(n_pairs, -1)
    vb = np.asarray(field(mate), dtype=float).reshape(n_pairs, -1)
    num = np.linalg.norm(va - vb, axis=1)
    scale = max(float(np.max(np.abs(va))), 1.0)
    keep = num > 100.0 * np.finfo(float).eps * scale
    if keep.sum() < 20:
        return HolderEstimate(1.0, 0.0, radius_lo, radius_hi,
                              int(keep.sum()), True, seed)
    xs = np.log(seps[keep])
    ys = np.log(num[keep])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    var = float(np.sum(resid ** 2)) / max(keep.sum() - 2, 1)
    sx = float(np.sum((xs - xs.mean()) ** 2))
    stderr = np.sqrt(var / sx) if sx > 0 else float("inf")
    exponent = float(np.clip(slope, 0.0, 1.05))
    return HolderEstimate(exponent, 1.96 * float(stderr), radius_lo,
                          radius_hi, int(keep.sum()), False, seed)


def conjugacy_residual(model, chain, linear, box, n_samples=500, seed=0):
    """Max/mean residuals of the conjugacy identity and its inverse side.

    Returns a dict with forward residuals of chain(F(x)) - Lambda chain(x)
    and inverse-side residuals of F(chain^{-1}(z)) - chain^{-1}(Lambda z)
    with z running over the forward image of the samples.
    """
    rng = np.random.default_rng(seed)
    pts = box.sample(n_samples, rng)
    lam = np.asarray(linear, dtype=float)
    fwd = chain.forward(model.f(pts)) - chain.forward(pts) @ lam.T
    fwd_norm = np.linalg.norm(fwd, axis=1)
    z = chain.forward(pts * 0.5)
    inv = model.f(chain.inverse(z)) - chain.inverse(z @ lam.T)
    inv_norm = np.linalg.norm(inv, axis=1)
    return {
        "max": float(np.max(fwd_norm)),
        "mean": float(np.mean(fwd_norm)),
        "inverse_max": float(np.max(inv_norm)),
        "inverse_mean": float(np.mean(inv_norm)),
        "n_samples": n_samples,
        "seed": seed,
    }


def foliation_invariance(model, foliation, n_samples=200, seed=0,
                         shrink=0.5):
    """Max residual of the leaf-mapping identity for a foliation result."""
    from .lp_foliation import foliation_invariance_residual
    return foliation_invariance_residual(model, foliation,
                                         n_samples=n_samples, seed=seed,
                                         shrink=shrink)


def diffeo_check(chain, box, n_samples=300, seed=0, fd_step=None):
    """Forward-inverse residual, Jacobian consistency and invertibility.

    Returns a dict with the round-trip residual, the max relative
    difference between the chain Jacobian and finite differences of the
    forward map, and the smallest singular value of the Jacobian over the
    samples.
    """
    rng = np.random.default_rng(seed)
    pts = box.sample(n_samples, rng)
    fwd = chain.forward(pts)
    back = chain.inverse(fwd)
    roundtrip = float(np.max(np.linalg.norm(back - pts, axis=1)))
    h = fd_step if fd_step is not None else 1e-6 * box.radius
    dim = box.dim
    jac_fd = np.zeros((n_samples, dim, dim))
    for a in range(dim):
        ep = pts.copy()
        em = pts.copy()
        ep[:, a] += h
        em[:, a] -= h
        jac_fd[:, :, a] = (chain.forward(ep) - chain.forward(em)) / (2 * h)
    jac = chain.jacobian(pts)
    rel = np.linalg.norm(jac - jac_fd, axis=(1, 2)) \
        / np.maximum(np.linalg.norm(jac_fd, axis=(1, 2)), 1e-12)
    svals = np.linalg.svd(jac, compute_uv=False)
    return {
        "roundtrip_max": roundtrip,
        "jacobian_rel_max": float(np.max(rel)),
        "min_singular_value": float(np.min(svals)),
        "n_samples": n_samples,
        "seed": seed,
    }


@dataclass
class SharpnessRow:
    parameter: float
    predicted_beta: float
    measured_exponent: float
    confidence: float
    error: str | None = None

    @property
    def passed(self):
        return (self.error is None
                and self.measured_exponent >= self.predicted_beta - 0.1)


def sharpness_experiment(family, params=None, epsilon=1e-3, seed=0,
                         pair_range=(1e-4, 1e-2)):
    """Linearize each family member and tabulate measured vs predicted.

    family: iterable of (parameter, MapModel).  Asserts only the
    lower-bound direction: the measured derivative exponent should not
    fall more than 0.1 below the guaranteed beta.  Per-member failures
    are recorded, not raised.
    """
    from .exponents import beta_overall
    from .hyperbolic import linearize_hyperbolic
    from .spectral import cluster_eigenvalues
    rows = []
    for parameter, model in family:
        try:
            dec = cluster_eigenvalues(
                np.abs(np.linalg.eigvals(model.linear)))
            predicted = beta_overall(dec, epsilon).beta_overall
            result = linearize_hyperbolic(model, params)
            radius = result.report.get("reporting_radius")
            if radius is None:
                radius = 0.5 * model.box.radius
            field = _jacobian_field(result.chain)
            est = holder_exponent(field, np.zeros(model.dimension),
                                  pair_range[0] * radius,
                                  pair_range[1] * radius, seed=seed)
            rows.append(SharpnessRow(float(parameter), predicted,
                                     est.exponent, est.confidence))
        except SmoothlinError as exc:
            rows.append(SharpnessRow(float(parameter), float("nan"),
                                     float("nan"), float("nan"), str(exc)))
    return rows


def _jacobian_field(chain):
    def field(pts):
        return chain.jacobian(np.atleast_2d(pts)).reshape(len(np.atleast_2d(pts)), -1)
    return field


def derivative_exponent(chain, radius, pair_range=(1e-4, 1e-2), seed=0,
                        n_pairs=400):
    """Holder estimate of the chain's derivative near the origin."""
    field = _jacobian_field(chain)
    return holder_exponent(field, np.zeros(chain.dim),
                           pair_range[0] * radius, pair_range[1] * radius,
                           n_pairs=n_pairs, seed=seed)
