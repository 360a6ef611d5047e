"""Invariant foliations through the Lyapunov-Perron sequence equation.

The unknown is a finite family (q_n) of functions of (x, y_minus) on a
product box.  The sequence operator and its derivative companion form a
fiber contraction; plain Picard iteration from zero converges to the
unique weighted fixed point, whose entry q_0 parameterizes the stable
foliation leaves.  Everything is pointwise over grid nodes, so the Picard
loop never interpolates; grids only matter when results are evaluated
off-node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DerivativeMismatch, EtaTooLarge, NoConvergence,
                     TailTooShort)
from .dynamics import inverse_model
from .grids import Box, GridFunction


@dataclass(frozen=True)
class BlockSplitting:
    """Coordinate split X = X_minus x X_plus with the two linear blocks."""

    minus_idx: tuple
    plus_idx: tuple
    lam_minus: np.ndarray
    lam_plus: np.ndarray

    @property
    def dim(self):
        return len(self.minus_idx) + len(self.plus_idx)

    @property
    def n_minus(self):
        return len(self.minus_idx)

    @property
    def n_plus(self):
        return len(self.plus_idx)

    def envelopes(self):
        """(ls_minus, ls_plus, lu_minus, lu_plus) from the block spectra."""
        mod_minus = np.abs(np.linalg.eigvals(self.lam_minus))
        mod_plus = np.abs(np.linalg.eigvals(self.lam_plus))
        return (float(mod_minus.min()), float(mod_minus.max()),
                float(mod_plus.min()), float(mod_plus.max()))

    def swapped_inverse(self):
        """Splitting seen by the inverse map: roles of the sides exchange."""
        return BlockSplitting(self.plus_idx, self.minus_idx,
                              np.linalg.inv(self.lam_plus),
                              np.linalg.inv(self.lam_minus))

    @classmethod
    def from_linear(cls, lam, d_minus):
        """Split a block-diagonal matrix at coordinate index d_minus."""
        lam = np.asarray(lam, dtype=float)
        n = lam.shape[0]
        minus = tuple(range(d_minus))
        plus = tuple(range(d_minus, n))
        return cls(minus, plus, lam[:d_minus, :d_minus],
                   lam[d_minus:, d_minus:])


@dataclass
class LPParameters:
    """Weights, truncation lengths and tolerances of the sequence solver."""

    gamma1: float
    gamma2: float
    n_seq: int = 8
    k_tail: int = 32
    tol: float = 1e-9
    max_iter: int = 500
    deriv_tol: float | None = None  # None: auto from the grid spacing
    require_certified: bool = False  # abort when the a-priori factor is >= 1

    def __post_init__(self):
        if self.n_seq < 1 or self.k_tail < self.n_seq:
            raise ValueError("need n_seq >= 1 and k_tail >= n_seq")

    @classmethod
    def auto(cls, splitting, eta=0.0, **kwargs):
        """Geometric-midpoint weights satisfying the admissibility strip."""
        _, ls_plus, lu_minus, lu_plus = splitting.envelopes()
        growth = lu_plus + eta
        gamma2 = np.sqrt(max(1.0, ls_plus * growth) * lu_minus)
        gamma1 = np.sqrt(ls_plus * min(1.0, gamma2 / growth))
        return cls(float(gamma1), float(gamma2), **kwargs)

    def validate(self, splitting, eta=0.0):
        _, ls_plus, lu_minus, lu_plus = splitting.envelopes()
        ok = (ls_plus < self.gamma1 < 1.0 < self.gamma2 < lu_minus
              and self.gamma1 * (lu_plus + eta) < self.gamma2)
        if not ok:
            raise ValueError(
                f"weights (gamma1={self.gamma1}, gamma2={self.gamma2}) violate "
                f"the admissibility strip for envelopes ls+={ls_plus}, "
                f"lu-={lu_minus}, lu+={lu_plus}, eta={eta}")


class ProductDomain:
    """Grid over a product box Omega = x_box x y_box.

    The y grid reuses the minus-coordinate axes of the x grid so that
    diagonal node pairs (x, pi_minus x) exist exactly.
    """

    def __init__(self, x_box, x_res, splitting, y_box=None, y_res=None):
        self.x_box = x_box
        self.splitting = splitting
        x_res = np.broadcast_to(np.asarray(x_res, dtype=int), (x_box.dim,))
        self.x_axes = [np.linspace(x_box.lo[a], x_box.hi[a], x_res[a])
                       for a in range(x_box.dim)]
        if y_box is None:
            midx = list(splitting.minus_idx)
            self.y_axes = [self.x_axes[i] for i in midx]
            y_box = Box(x_box.lo[midx], x_box.hi[midx])
        else:
            y_res = np.broadcast_to(np.asarray(y_res, dtype=int), (y_box.dim,))
            self.y_axes = [np.linspace(y_box.lo[a], y_box.hi[a], y_res[a])
                           for a in range(y_box.dim)]
        self.y_box = y_box
        self.x_shape = tuple(len(ax) for ax in self.x_axes)
        self.y_shape = tuple(len(ax) for ax in self.y_axes)
        mesh = np.meshgrid(*self.x_axes, indexing="ij")
        self.x_nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        mesh = np.meshgrid(*self.y_axes, indexing="ij")
        self.y_nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        self.nx = self.x_nodes.shape[0]
        self.ny = self.y_nodes.shape[0]

    def combined_box(self):
        return Box(np.concatenate([self.x_box.lo, self.y_box.lo]),
                   np.concatenate([self.x_box.hi, self.y_box.hi]))

    def grid_shape(self):
        return self.x_shape + self.y_shape

    def refine(self, factor=2):
        x_res = tuple((len(ax) - 1) * factor + 1 for ax in self.x_axes)
        return ProductDomain(self.x_box, x_res, self.splitting)


class SequenceFamily:
    """Finite weighted family of node-sampled functions of (x, y_minus)."""

    def __init__(self, domain, values, weight):
        self.domain = domain
        self.values = np.asarray(values, dtype=float)
        self.weight = float(weight)
        expect = domain.grid_shape()
        if self.values.shape[1:1 + len(expect)] != expect:
            raise ValueError("family values do not match the domain grid")

    @property
    def n_entries(self):
        return self.values.shape[0]

    @property
    def out_shape(self):
        return self.values.shape[1 + len(self.domain.grid_shape()):]

    def weighted_norm(self):
        flat = self.values.reshape(self.n_entries, -1,
                                   int(np.prod(self.out_shape, dtype=int)))
        sup = np.linalg.norm(flat, axis=2).max(axis=1)
        k = np.arange(self.n_entries)
        return float(np.max(sup * self.weight ** (-k.astype(float))))

    def weighted_delta(self, other):
        diff = self.values - other.values
        flat = diff.reshape(self.n_entries, -1,
                            int(np.prod(self.out_shape, dtype=int)))
        sup = np.linalg.norm(flat, axis=2).max(axis=1)
        k = np.arange(self.n_entries)
        return float(np.max(sup * self.weight ** (-k.astype(float))))

    def entry_gridfn(self, k, order=1, extrapolation="clamp"):
        box = self.domain.combined_box()
        vals = self.values[k]
        return GridFunction(box, vals, self.out_shape, order=order,
                            extrapolation=extrapolation)

    @classmethod
    def zeros(cls, domain, n_entries, out_shape, weight):
        shape = (n_entries,) + domain.grid_shape() + tuple(out_shape)
        return cls(domain, np.zeros(shape), weight)


class LPContext:
    """Precomputed orbit data shared by the two sequence operators."""

    def __init__(self, model, splitting, params, domain, eta=0.0):
        self.model = model
        self.splitting = splitting
        self.params = params
        self.domain = domain
        self.eta = float(eta)
        params.validate(splitting, eta)
        k_top = params.k_tail
        nx = domain.nx
        n = model.dimension
        self.orbit = np.zeros((k_top + 1, nx, n))
        self.orbit_df = np.zeros((k_top + 1, nx, n, n))
        pts = domain.x_nodes.copy()
        jac = np.broadcast_to(np.eye(n), (nx, n, n)).copy()
        for k in range(k_top + 1):
            self.orbit[k] = pts
            self.orbit_df[k] = jac
            if k < k_top:
                jac = np.einsum("nij,njk->nik", model.df(pts), jac)
                pts = model.f(pts)
        self.f_orbit = np.stack([model.nonlinearity(self.orbit[k])
                                 for k in range(k_top + 1)])
        self.df_orbit = np.stack([model.nonlinearity_jacobian(self.orbit[k])
                                  for k in range(k_top + 1)])
        mi = list(splitting.minus_idx)
        pi = list(splitting.plus_idx)
        self.mi = mi
        self.pi = pi
        # powers of the minus block and the inverse plus block
        self.lam_minus_pows = [np.eye(splitting.n_minus)]
        for _ in range(k_top + 1):
            self.lam_minus_pows.append(self.lam_minus_pows[-1]
                                       @ splitting.lam_minus)
        self.lam_plus_inv = np.linalg.inv(splitting.lam_plus)
        # affine data A(x, y) = y - pi_minus x, shape (nx, ny, n_minus)
        self.affine = (domain.y_nodes[None, :, :]
                       - domain.x_nodes[:, None, mi])
        self.ls_plus = splitting.envelopes()[1]
        self.lu_minus = splitting.envelopes()[2]
        self.lu_plus = splitting.envelopes()[3]

    def contraction_estimates(self):
        """A-priori Lipschitz bounds of the two operators, linear in eta."""
        g1, g2 = self.params.gamma1, self.params.gamma2
        c_t = self.eta * (1.0 / (g1 - self.ls_plus)
                          + 1.0 / (self.lu_minus - g1))
        c_s = self.eta * (1.0 / (g2 - self.ls_plus)
                          + 1.0 / (self.lu_minus - g2))
        return c_t, c_s

    def tail_bound(self, norm_v=1.0):
        """Weighted effect of dropping sum terms beyond k_tail on the first
        n_seq entries."""
        g1 = self.params.gamma1
        r = g1 / self.lu_minus
        return (self.eta * norm_v / self.lu_minus
                * r ** (self.params.k_tail + 1 - self.params.n_seq)
                / (1.0 - r))


def operator_T(v, ctx):
    """One application of the sequence operator."""
    dom = ctx.domain
    k_top = ctx.params.k_tail
    nx, ny = dom.nx, dom.ny
    n = ctx.model.dimension
    n_minus = ctx.splitting.n_minus
    n_plus = ctx.splitting.n_plus
    vals = v.values.reshape(k_top + 1, nx, ny, n)
    # increments Delta f_k = f(v_k + F^k x) - f(F^k x)
    delta = np.zeros((k_top + 1, nx, ny, n))
    for k in range(k_top + 1):
        arg = vals[k] + ctx.orbit[k][:, None, :]
        fv = ctx.model.nonlinearity(arg.reshape(-1, n)).reshape(nx, ny, n)
        delta[k] = fv - ctx.f_orbit[k][:, None, :]
    out = np.zeros_like(vals)
    # forward recursion for the minus-side sums
    p_sum = np.zeros((nx, ny, n_minus))
    lam_m = ctx.splitting.lam_minus
    for k in range(k_top + 1):
        out[k][..., ctx.mi] = ctx.affine @ ctx.lam_minus_pows[k].T + p_sum
        p_sum = p_sum @ lam_m.T + delta[k][..., ctx.mi]
    # backward recursion for the plus-side sums
    q_sum = np.zeros((nx, ny, n_plus))
    for k in range(k_top, -1, -1):
        q_sum = (delta[k][..., ctx.pi] + q_sum) @ ctx.lam_plus_inv.T
        out[k][..., ctx.pi] = -q_sum
    return SequenceFamily(dom, out.reshape(v.values.shape), v.weight)


def _pad_plus(mat, n_total):
    """Embed an (..., r, n) block as (..., r, n + n_minus) with zero y-part."""
    shape = mat.shape[:-1] + (n_total,)
    out = np.zeros(shape)
    out[..., :mat.shape[-1]] = mat
    return out


def operator_S(v, w, ctx):
    """One application of the derivative companion operator."""
    dom = ctx.domain
    k_top = ctx.params.k_tail
    nx, ny = dom.nx, dom.ny
    n = ctx.model.dimension
    n_minus = ctx.splitting.n_minus
    n_cols = n + n_minus
    v_vals = v.values.reshape(k_top + 1, nx, ny, n)
    w_vals = w.values.reshape(k_top + 1, nx, ny, n, n_cols)
    delta = np.zeros((k_top + 1, nx, ny, n, n_cols))
    for k in range(k_top + 1):
        arg = v_vals[k] + ctx.orbit[k][:, None, :]
        dfv = ctx.model.nonlinearity_jacobian(
            arg.reshape(-1, n)).reshape(nx, ny, n, n)
        chain = _pad_plus(ctx.orbit_df[k], n_cols)        # (nx, n, n_cols)
        total = w_vals[k] + chain[:, None, :, :]
        term1 = np.einsum("xyij,xyjc->xyic", dfv, total)
        term2 = np.einsum("xij,xjc->xic", ctx.df_orbit[k], chain)
        delta[k] = term1 - term2[:, None, :, :]
    out = np.zeros_like(w_vals)
    lam_m = ctx.splitting.lam_minus
    # constant block: derivative of the affine seed
    base = np.zeros((n_minus, n_cols))
    base[:, n:] = np.eye(n_minus)
    for j, idx in enumerate(ctx.mi):
        base[:, idx] -= np.eye(n_minus)[:, j]
    p_sum = np.zeros((nx, ny, n_minus, n_cols))
    for k in range(k_top + 1):
        out[k][..., ctx.mi, :] = (ctx.lam_minus_pows[k] @ base)[None, None] + p_sum
        p_sum = np.einsum("ij,xyjc->xyic", lam_m, p_sum) \
            + delta[k][..., ctx.mi, :]
    q_sum = np.zeros((nx, ny, ctx.splitting.n_plus, n_cols))
    for k in range(k_top, -1, -1):
        q_sum = np.einsum("ij,xyjc->xyic", ctx.lam_plus_inv,
                          delta[k][..., ctx.pi, :] + q_sum)
        out[k][..., ctx.pi, :] = -q_sum
    return SequenceFamily(dom, out.reshape(w.values.shape), w.weight)


@dataclass
class ConvergenceLog:
    rows: list = field(default_factory=list)

    def add(self, iteration, dv, dw):
        ratio = float("nan")
        if len(self.rows) and self.rows[-1][1] > 0:
            ratio = max(dv, dw) / max(self.rows[-1][1], self.rows[-1][2])
        self.rows.append((iteration, dv, dw, ratio))

    def tail_contraction(self, skip_floor=1e-14):
        ratios = [r for (_, dv, dw, r) in self.rows[2:]
                  if np.isfinite(r) and max(dv, dw) > skip_floor]
        return max(ratios[-5:]) if ratios else float("nan")


@dataclass
class FiberSolution:
    v: SequenceFamily
    w: SequenceFamily
    log: ConvergenceLog
    ctx: LPContext
    deriv_residual: float


def solve_fiber_contraction(model, splitting, params, domain, eta=0.0,
                            check_derivative=True):
    """Iterate the pair operator from zero until both components settle.

    Raises EtaTooLarge when the a-priori contraction estimate is >= 1,
    TailTooShort when the truncation bound exceeds tol/10, NoConvergence
    on iteration-cap overrun, and DerivativeMismatch when the fiber fixed
    point disagrees with finite differences of the base fixed point.
    """
    ctx = LPContext(model, splitting, params, domain, eta)
    c_t, c_s = ctx.contraction_estimates()
    if max(c_t, c_s) >= 1.0 and params.require_certified:
        raise EtaTooLarge(
            f"estimated contraction factors ({c_t:.3g}, {c_s:.3g}) >= 1")
    n = model.dimension
    n_cols = n + splitting.n_minus
    v = SequenceFamily.zeros(domain, params.k_tail + 1, (n,), params.gamma1)
    w = SequenceFamily.zeros(domain, params.k_tail + 1, (n, n_cols),
                             params.gamma2)
    log = ConvergenceLog()
    converged = False
    growing = 0
    for it in range(params.max_iter):
        v_new = operator_T(v, ctx)
        w_new = operator_S(v, w, ctx)
        dv = v_new.weighted_delta(v)
        dw = w_new.weighted_delta(w)
        log.add(it, dv, dw)
        v, w = v_new, w_new
        if dv < params.tol and dw < params.tol:
            converged = True
            break
        ratio = log.rows[-1][3]
        growing = growing + 1 if (it >= 3 and np.isfinite(ratio)
                                  and ratio >= 1.0) else 0
        if growing >= 3:
            raise EtaTooLarge(
                f"measured iteration ratio >= 1 for 3 sweeps (last {ratio:.3g});"
                " the nonlinearity bound is too large for these weights")
    if not converged:
        raise NoConvergence(
            f"fiber iteration did not reach tol={params.tol} in "
            f"{params.max_iter} sweeps (last deltas {dv:.3g}, {dw:.3g})")
    tail = ctx.tail_bound(max(v.weighted_norm(), 1e-30))
    if tail > params.tol * 0.1:
        raise TailTooShort(f"tail bound {tail:.3g} > tol/10; raise k_tail")
    deriv_res = _derivative_consistency(v, w, domain) if check_derivative \
        else float("nan")
    if check_derivative:
        threshold = params.deriv_tol
        if threshold is None:
            # the derivative field is only Holder, so finite differences
            # carry an O(h * Lip-scale-of-w) floor rather than O(h^2)
            axes = domain.x_axes + domain.y_axes
            h_max = max(float(ax[1] - ax[0]) for ax in axes)
            w_var = 0.0
            for k in (0, 1):
                grads = np.gradient(w.values[k], *axes,
                                    axis=tuple(range(len(axes))), edge_order=1)
                w_var = max(w_var,
                            max(float(np.max(np.abs(g))) for g in grads))
            threshold = max(10.0 * params.tol, 2.0 * h_max * w_var + 1e-10)
        if deriv_res > threshold:
            raise DerivativeMismatch(
                f"fiber fixed point vs finite differences: {deriv_res:.3g} "
                f"> {threshold:.3g}")
    return FiberSolution(v, w, log, ctx, deriv_res)


def _derivative_consistency(v, w, domain, entries=(0, 1)):
    """Max mismatch between w entries and grid finite differences of v."""
    gs = domain.grid_shape()
    naxes = len(gs)
    worst = 0.0
    axes_nodes = domain.x_axes + domain.y_axes
    for k in entries:
        vk = v.values[k]
        wk = w.values[k]
        grads = np.gradient(vk, *axes_nodes, axis=tuple(range(naxes)),
                            edge_order=2)
        fd = np.stack(grads, axis=-1)     # (*grid, n, n+n_minus)
        interior = tuple(slice(1, -1) for _ in range(naxes))
        diff = np.abs(fd[interior] - wk[interior])
        if diff.size:
            worst = max(worst, float(np.max(diff)))
    return worst


# -- foliation extraction -----------------------------------------------------


@dataclass
class FoliationResult:
    """Stable (or unstable, with swapped roles) foliation data."""

    solution: FiberSolution
    splitting: BlockSplitting
    domain: ProductDomain
    q0: GridFunction
    dq0: GridFunction
    b1_residual: float
    b2_residual: float
    holder_pairs: tuple   # (separations, variations) for the Dq0 exponent

    def leaf_point(self, x, y):
        """x + q0(x, y), the leaf of x at transverse parameter y."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        z = np.hstack([x, y])
        return x + self.q0.eval(z)

    def h(self, x, y):
        """Plus-part of the leaf point: the graph map of the leaf."""
        return self.leaf_point(x, y)[:, list(self.splitting.plus_idx)]

    def fitted_dq0_exponent(self):
        seps, vars_ = self.holder_pairs
        keep = vars_ > 1e-13
        if keep.sum() < 8:
            return 1.0, True
        slope = np.polyfit(np.log(seps[keep]), np.log(vars_[keep]), 1)[0]
        return float(np.clip(slope, 0.0, 1.05)), False


def _holder_pairs_from_nodes(values, domain, max_pairs=4000, seed=1):
    """Node-pair separations / derivative variations near the origin."""
    rng = np.random.default_rng(seed)
    pts = np.hstack([np.repeat(domain.x_nodes, domain.ny, axis=0),
                     np.tile(domain.y_nodes, (domain.nx, 1))])
    flat = values.reshape(pts.shape[0], -1)
    n_pts = pts.shape[0]
    i = rng.integers(0, n_pts, size=max_pairs)
    j = rng.integers(0, n_pts, size=max_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    seps = np.linalg.norm(pts[i] - pts[j], axis=1)
    vars_ = np.linalg.norm(flat[i] - flat[j], axis=1)
    return seps, vars_


def stable_foliation(model, splitting, params, domain, eta=0.0):
    """Solve the sequence equation and package the q0 leaf data."""
    sol = solve_fiber_contraction(model, splitting, params, domain, eta)
    gs = domain.grid_shape()
    n = model.dimension
    q0_vals = sol.v.values[0].reshape(gs + (n,))
    dq0_vals = sol.w.values[0].reshape(gs + (n, n + splitting.n_minus))
    box = domain.combined_box()
    q0 = GridFunction(box, q0_vals, (n,), order=1, extrapolation="clamp")
    dq0 = GridFunction(box, dq0_vals, (n, n + splitting.n_minus), order=1,
                       extrapolation="clamp")
    # (B1): pi_minus(x + q0(x,y)) = y at every node
    mi = list(splitting.minus_idx)
    q0_flat = sol.v.values[0].reshape(domain.nx, domain.ny, n)
    b1 = float(np.max(np.abs(q0_flat[..., mi] - sol.ctx.affine)))
    # (B2): q0(x, pi_minus x) = 0 where the diagonal nodes align
    b2 = _diagonal_residual(q0_flat, domain, splitting)
    pairs = _holder_pairs_from_nodes(sol.w.values[0], domain)
    return FoliationResult(sol, splitting, domain, q0, dq0, b1, b2, pairs)


def _diagonal_residual(q0_flat, domain, splitting):
    worst = 0.0
    mi = list(splitting.minus_idx)
    for ix in range(domain.nx):
        target = domain.x_nodes[ix, mi]
        match = np.flatnonzero(
            np.all(np.abs(domain.y_nodes - target) < 1e-14, axis=1))
        for iy in match:
            worst = max(worst, float(np.max(np.abs(q0_flat[ix, iy]))))
    return worst


def unstable_foliation(model, splitting, params=None, domain=None, eta=0.0,
                       x_res=None, nonlinearity_radius=1.0):
    """Stable foliation of the Newton-inverted map, roles swapped.

    The result's minus side is the original plus side, so its leaf graph
    maps (x, y_plus) to the minus coordinates.  nonlinearity_radius should
    cover the image of the region where the map is nonlinear (the bump
    outer ball), so the inverse's derivative deviation is sampled there.
    """
    inv = inverse_model(model)
    swapped = splitting.swapped_inverse()
    radius = nonlinearity_radius * (1.2 * np.linalg.norm(model.linear, 2) + 1.0)
    eta_inv = _inverse_eta(model, splitting, eta, radius=radius)
    if params is None:
        params = LPParameters.auto(swapped, eta_inv)
    if domain is None:
        domain = ProductDomain(Box(model.box.lo, model.box.hi), x_res, swapped)
    return stable_foliation(inv, swapped, params, domain, eta_inv)


def _inverse_eta(model, splitting, eta, radius=None, n_samples=4000, seed=3):
    """Sampled sup ||DG - Lambda^{-1}|| of the inverse map.

    Samples cover the image of the nonlinearity's support; beyond it the
    inverse is exactly linear.
    """
    lam_inv = np.linalg.inv(model.linear)
    norm_inv = np.linalg.norm(lam_inv, 2)
    if eta * norm_inv >= 1.0:
        raise EtaTooLarge("map too far from linear to invert globally")
    if radius is None:
        radius = 1.0
    rng = np.random.default_rng(seed)
    n = model.dimension
    pts = rng.standard_normal((n_samples, n))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= radius * rng.random((n_samples, 1)) ** (1.0 / n)
    from .dynamics import newton_invert_points
    pre = newton_invert_points(model, pts)
    dg = np.linalg.inv(model.df(pre))
    return float(np.max(np.linalg.norm(dg - lam_inv, ord=2, axis=(1, 2))))


def verify_lp_equivalence(model, foliation, n_max=None, n_samples=200,
                          seed=0, shrink=0.6):
    """Max residual of F^n(x + q0(x,y)) - F^n(x) - q_n(x,y) over samples.

    Samples are interior (boxes shrunk by the given factor) and the q_n
    entries are interpolated, so the residual tracks interpolation error
    and decreases under grid refinement.
    """
    dom = foliation.domain
    params = foliation.solution.ctx.params
    n_max = params.n_seq if n_max is None else int(n_max)
    rng = np.random.default_rng(seed)
    xs = dom.x_box.scaled(shrink).sample(n_samples, rng)
    ys = dom.y_box.scaled(shrink).sample(n_samples, rng)
    z = np.hstack([xs, ys])
    start = xs + foliation.q0.eval(z)
    base = xs.copy()
    worst = 0.0
    for k in range(n_max + 1):
        qk = foliation.solution.v.entry_gridfn(k)
        resid = start - base - qk.eval(z)
        worst = max(worst, float(np.max(np.linalg.norm(resid, axis=1))))
        start = model.f(start)
        base = model.f(base)
    return worst


def foliation_invariance_residual(model, foliation, n_samples=200, seed=0,
                                  shrink=0.5):
    """Max residual of the leaf-mapping identity (property B4)."""
    dom = foliation.domain
    rng = np.random.default_rng(seed)
    xs = dom.x_box.scaled(shrink).sample(n_samples, rng)
    ys = dom.y_box.scaled(shrink).sample(n_samples, rng)
    mi = list(foliation.splitting.minus_idx)
    leaf = foliation.leaf_point(xs, ys)
    lhs = model.f(leaf)
    fx = model.f(xs)
    y_img = lhs[:, mi]
    rhs = fx + foliation.q0.eval(np.hstack([fx, y_img]))
    return float(np.max(np.linalg.norm(lhs - rhs, axis=1)))
