"""Smooth maps with a fixed point at the origin, and their modifications.

MapModel bundles a vectorized evaluator, its Jacobian, the linear part
and a domain box.  Polynomial maps get exact symbolic Jacobians; generic
callables fall back to central finite differences.  bump_modify multiplies
the higher-order terms by a smooth radial cutoff so the derivative stays
within a prescribed distance of the linear part on all of space.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from .errors import (EtaNotAchievable, InverseNewtonFailed, LeftDomain,
                     OriginUndefined)

FD_STEP_FACTOR = 1e-5


# -- the smooth kernel and sector step ---------------------------------------


def bump_kernel(t):
    """exp(1/(t(t-1))) on (0,1), zero elsewhere; smooth and compactly
    supported."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    out[inside] = np.exp(1.0 / (ti * (ti - 1.0)))
    return out if out.ndim else float(out)


_KERNEL_MASS = quad(lambda s: bump_kernel(s), 0.0, 1.0, epsabs=1e-14)[0]

# cumulative table for fast vectorized evaluation of the smoothed step
_STEP_NODES = np.linspace(0.0, 1.0, 8193)
_STEP_CDF = None


def _step_table():
    """Cumulative kernel integral by composite Simpson on node pairs."""
    global _STEP_CDF
    if _STEP_CDF is None:
        vals = bump_kernel(_STEP_NODES)
        h = _STEP_NODES[1] - _STEP_NODES[0]
        cdf = np.zeros_like(_STEP_NODES)
        even = (h / 3.0) * (vals[:-2:2] + 4.0 * vals[1:-1:2] + vals[2::2])
        cdf[2::2] = np.cumsum(even)
        # odd nodes: half-panel Simpson correction on (i-1, i, i+1)
        cdf[1::2] = cdf[:-1:2] + (h / 12.0) * (
            5.0 * vals[:-1:2] + 8.0 * vals[1::2] - vals[2::2])
        _STEP_CDF = cdf / cdf[-1]
    return _STEP_CDF


def smooth_step(s):
    """Normalized integral of the kernel: 0 below 0, 1 above 1, smooth
    monotone in between."""
    s = np.asarray(s, dtype=float)
    cdf = _step_table()
    out = np.interp(np.clip(s, 0.0, 1.0), _STEP_NODES, cdf)
    out = np.where(s <= 0.0, 0.0, np.where(s >= 1.0, 1.0, out))
    return out if out.ndim else float(out)


def smooth_step_quad(s):
    """Reference evaluation of the smoothed step by adaptive quadrature."""
    s = float(s)
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0
    val = quad(lambda t: bump_kernel(t), 0.0, s, epsabs=1e-14)[0]
    return val / _KERNEL_MASS


def sector_step(x1, x2):
    """Smoothed indicator of the sector x1 >= |x2|.

    Equals 1 when x1 >= |x2|, 0 when x1 <= 0, and the normalized kernel
    integral up to x1/|x2| in between.  Undefined at the origin; constant
    along rays, hence 0-homogeneous.
    """
    x1 = float(x1)
    x2 = float(x2)
    if x1 == 0.0 and x2 == 0.0:
        raise OriginUndefined("sector step has no value at the origin")
    if x2 == 0.0:
        return 1.0 if x1 > 0.0 else 0.0
    return smooth_step_quad(x1 / abs(x2))


# -- polynomial machinery -----------------------------------------------------


class PolynomialMap:
    """Vectorized polynomial map given by (coefficient, multi-index, out) terms."""

    def __init__(self, dimension, terms):
        self.dimension = int(dimension)
        self.terms = []
        for coeff, midx, out in terms:
            midx = tuple(int(k) for k in midx)
            if len(midx) != self.dimension:
                raise ValueError("multi-index length must equal the dimension")
            if sum(midx) == 0:
                raise ValueError("constant terms would move the fixed point")
            self.terms.append((float(coeff), midx, int(out)))
            if not 0 <= int(out) < self.dimension:
                raise ValueError("output index out of range")

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros_like(pts)
        for coeff, midx, j in self.terms:
            mono = np.full(pts.shape[0], coeff)
            for axis, power in enumerate(midx):
                if power:
                    mono = mono * pts[:, axis] ** power
            out[:, j] += mono
        return out

    def jacobian(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((pts.shape[0], self.dimension, self.dimension))
        for coeff, midx, j in self.terms:
            for axis, power in enumerate(midx):
                if power == 0:
                    continue
                mono = np.full(pts.shape[0], coeff * power)
                for ax2, p2 in enumerate(midx):
                    p_eff = p2 - 1 if ax2 == axis else p2
                    if p_eff:
                        mono = mono * pts[:, ax2] ** p_eff
                out[:, j, axis] += mono
        return out

    def linear_part(self):
        lam = np.zeros((self.dimension, self.dimension))
        for coeff, midx, j in self.terms:
            if sum(midx) == 1:
                axis = midx.index(1)
                lam[j, axis] += coeff
        return lam


def _fd_jacobian(fn, pts, h):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[1]
    probe = fn(pts)
    out = np.zeros((pts.shape[0], probe.shape[1], n))
    for a in range(n):
        ep = pts.copy()
        em = pts.copy()
        ep[:, a] += h
        em[:, a] -= h
        out[:, :, a] = (fn(ep) - fn(em)) / (2.0 * h)
    return out


class MapModel:
    """A smooth map fixing the origin, with Jacobian and domain box."""

    def __init__(self, dimension, f, df=None, linear=None, box=None,
                 lip_df=None, name="map"):
        self.dimension = int(dimension)
        self._f = f
        self.box = box
        self.name = name
        fd_h = (box.radius if box is not None else 1.0) * FD_STEP_FACTOR
        self._fd_h = fd_h
        self._df = df if df is not None else (
            lambda pts: _fd_jacobian(self._f, pts, fd_h))
        origin = np.zeros((1, self.dimension))
        f0 = np.linalg.norm(self._f(origin))
        if f0 > 1e-12:
            raise ValueError(f"map does not fix the origin: |F(0)| = {f0:.3g}")
        self.linear = (np.asarray(linear, dtype=float) if linear is not None
                       else self._df(origin)[0])
        if np.linalg.norm(self._df(origin)[0] - self.linear) > 1e-10:
            raise ValueError("DF(0) disagrees with the declared linear part")
        self.lip_df = lip_df

    @classmethod
    def from_polynomial(cls, dimension, terms, box=None, name="poly"):
        poly = PolynomialMap(dimension, terms)
        model = cls(dimension, poly, poly.jacobian, poly.linear_part(),
                    box=box, name=name)
        model.polynomial = poly
        return model

    def f(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self._f(pts)

    def df(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self._df(pts)

    def nonlinearity(self, pts):
        """f(x) - Lambda x, the higher-order part."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.f(pts) - pts @ self.linear.T

    def nonlinearity_jacobian(self, pts):
        return self.df(pts) - self.linear

    def estimate_lipschitz_df(self, n_pairs=2000, seed=0):
        """Sampled Lipschitz constant of DF over the domain box."""
        if self.box is None:
            raise ValueError("needs a domain box")
        rng = np.random.default_rng(seed)
        a = self.box.sample(n_pairs, rng)
        b = self.box.sample(n_pairs, rng)
        num = np.linalg.norm(self.df(a) - self.df(b), axis=(1, 2))
        den = np.linalg.norm(a - b, axis=1)
        keep = den > 1e-12
        return float(np.max(num[keep] / den[keep]))


def iterate(model, x, k, check_box=True):
    """k-fold composition F^k(x), vectorized over points."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    scalar = np.asarray(x).ndim == 1
    for step in range(int(k)):
        if check_box and model.box is not None:
            if not np.all(model.box.contains(pts)):
                raise LeftDomain(f"orbit left the domain at step {step}",
                                 step=step)
        pts = model.f(pts)
    return pts[0] if scalar else pts


def iterate_derivative(model, x, k, check_box=True):
    """Jacobian of F^k at x by the chain rule."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    scalar = np.asarray(x).ndim == 1
    jac = np.broadcast_to(np.eye(model.dimension),
                          (pts.shape[0], model.dimension, model.dimension)).copy()
    for step in range(int(k)):
        if check_box and model.box is not None:
            if not np.all(model.box.contains(pts)):
                raise LeftDomain(f"orbit left the domain at step {step}",
                                 step=step)
        jac = np.einsum("nij,njk->nik", model.df(pts), jac)
        pts = model.f(pts)
    return jac[0] if scalar else jac


# -- bump modification --------------------------------------------------------


class BumpModification:
    """Record of one radial cutoff modification."""

    def __init__(self, r0, r1, eta):
        self.r0 = float(r0)
        self.r1 = float(r1)
        self.eta = float(eta)

    def __repr__(self):
        return f"BumpModification(r0={self.r0}, r1={self.r1}, eta={self.eta})"


def _cutoff(r, r0, r1):
    return 1.0 - smooth_step((np.asarray(r, dtype=float) - r0) / (r1 - r0))


def _cutoff_slope(r, r0, r1):
    s = (np.asarray(r, dtype=float) - r0) / (r1 - r0)
    return -bump_kernel(s) / (_KERNEL_MASS * (r1 - r0))


def bump_modify(model, r0, r1, eta_target=None, n_samples=20000, seed=0):
    """Multiply the higher-order terms by a smooth radial cutoff.

    The returned map equals the original inside radius r0, its linear part
    outside r1, and is globally defined with ||DF(x) - Lambda|| <= eta
    everywhere, eta being estimated by dense sampling.  Raises
    EtaNotAchievable when the estimate exceeds eta_target.
    """
    if not (0.0 < r0 < r1):
        raise ValueError("need 0 < r0 < r1")
    lam = model.linear

    def f_mod(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        rho = _cutoff(r, r0, r1)
        lin = pts @ lam.T
        inside = r < r1
        out = lin.copy()
        if np.any(inside):
            sub = pts[inside]
            out[inside] = lin[inside] + rho[inside, None] * model.nonlinearity(sub)
        return out

    def df_mod(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        r = np.linalg.norm(pts, axis=1)
        out = np.broadcast_to(lam, (n,) + lam.shape).copy()
        inside = r < r1
        if np.any(inside):
            sub = pts[inside]
            rs = r[inside]
            rho = _cutoff(rs, r0, r1)
            dnl = model.nonlinearity_jacobian(sub)
            out[inside] += rho[:, None, None] * dnl
            ramp = (rs > r0) & (rs < r1)
            if np.any(ramp):
                sr = sub[ramp]
                rr = rs[ramp]
                slope = _cutoff_slope(rr, r0, r1)
                grad_r = sr / rr[:, None]
                nl = model.nonlinearity(sr)
                outer = np.einsum("ni,nj->nij", nl, grad_r)
                idx = np.flatnonzero(inside)[ramp]
                out[idx] += slope[:, None, None] * outer
        return out

    modified = MapModel(model.dimension, f_mod, df_mod, lam, box=None,
                        name=model.name + "+cutoff")
    rng = np.random.default_rng(seed)
    pts = rng.random((n_samples, model.dimension)) * 2.0 - 1.0
    radii = r1 * rng.random(n_samples) ** (1.0 / model.dimension)
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * radii[:, None]
    devs = np.linalg.norm(df_mod(pts) - lam, ord=2, axis=(1, 2))
    eta = float(np.max(devs)) if devs.size else 0.0
    if eta_target is not None and eta > eta_target:
        raise EtaNotAchievable(
            f"achieved eta {eta:.6g} > target {eta_target:.6g}; shrink radii",
            achieved=eta)
    return modified, BumpModification(r0, r1, eta)


# -- Newton inversion ---------------------------------------------------------


def newton_invert_points(model, targets, seed_pts=None, tol=1e-12,
                         max_iter=80):
    """Solve F(x) = y for each target y by damped vectorized Newton."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    lam_inv = np.linalg.inv(model.linear)
    x = targets @ lam_inv.T if seed_pts is None else np.array(seed_pts, float)
    res = model.f(x) - targets
    norm = np.linalg.norm(res, axis=1)
    for _ in range(max_iter):
        if np.all(norm <= tol):
            return x
        jac = model.df(x)
        step = np.linalg.solve(jac, res[..., None])[..., 0]
        scale = np.ones(x.shape[0])
        for _ in range(40):
            x_try = x - scale[:, None] * step
            res_try = model.f(x_try) - targets
            norm_try = np.linalg.norm(res_try, axis=1)
            improved = (norm_try <= norm) | (norm <= tol)
            if np.all(improved):
                break
            scale = np.where(improved, scale, scale * 0.5)
        # never move points that would get worse
        worse = norm_try > norm
        x_try[worse] = x[worse]
        res_try[worse] = res[worse]
        norm_try[worse] = norm[worse]
        x = x_try
        res = res_try
        norm = norm_try
    if np.all(norm <= 1e4 * tol):
        return x
    raise InverseNewtonFailed(
        f"max residual {float(np.max(norm)):.3g} after {max_iter} iterations")


def inverse_model(model, box=None, tol=1e-12, name=None):
    """MapModel wrapping the Newton inverse of a diffeomorphism."""
    lam_inv = np.linalg.inv(model.linear)

    def f_inv(pts):
        return newton_invert_points(model, pts, tol=tol)

    def df_inv(pts):
        pre = f_inv(np.atleast_2d(np.asarray(pts, dtype=float)))
        return np.linalg.inv(model.df(pre))

    return MapModel(model.dimension, f_inv, df_inv, lam_inv, box=box,
                    name=name or (model.name + "^-1"))
