"""Per-band cascade linearization of contractions.

The cascade peels one spectral band at a time, top band first: straighten
the invariant graph over the slower bands, take the inverse-power limit
of the band component along iterates, and rebuild that component of the
coordinates.  Composing the per-band transforms conjugates the map to its
linear part.

Numerical realization notes.  The graph pull-back w -> C^{-1} w leaves any
finite grid, and short-stencil extrapolation there is violently unstable,
so the graphs are represented as global least-squares polynomials fitted
on collocation nodes; polynomials extend stably and exactly reproduce the
polynomial graphs of the test maps.  The band limits multiply iterate
errors by inverse powers of the band block, which amplifies multilinear
interpolation noise beyond the residual targets, so the limit and inverse
grids interpolate cubically.  Per-stage grid extents come from cheap pilot
graph solves against the raw map.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iter_product
from math import ceil, log

import numpy as np

from .errors import (BandConditionViolated, ConditionViolated, GraphLeavesBox,
                     NoConvergence, SlowDecay)
from .grids import Box, GridFunction
from .spectral import (LinearPart, Margins, check_band_condition,
                       cluster_eigenvalues)
from .transforms import (GraphStraighten, LinearTransform, TransformChain,
                         VComponentTransform, damped_newton)


@dataclass
class CascadeParams:
    """Grid sizes, covers and tolerances of the cascade."""

    resolution: int = 65          # nodes across the working box per axis
    working_radius: float | None = None   # default: half the model box
    tol: float = 1e-10            # limit stopping tolerance
    graph_tol: float = 1e-13      # graph collocation stopping tolerance
    kmax: int | None = None       # None: from the a-priori decay rate
    pad: float = 1.25             # relative margin of all covers
    graph_degree: int = 8         # total degree of the graph polynomials
    delta: float | None = None    # band margin; None: Margins default
    gap_threshold: float = 0.2
    max_graph_iter: int = 400
    max_limit_iter: int = 2000
    interp_order: int = 3
    rate_fit_min_points: int = 4
    extent_safety: float = 1.3    # head-room on the pilot-derived extents


@dataclass
class BandFrame:
    """Coordinate index groups of the bands, ascending by modulus."""

    band_idx: list                # list of index lists, one per band
    matrix: np.ndarray            # block-diagonal linear part
    margins: Margins

    @property
    def m(self):
        return len(self.band_idx)

    @property
    def dim(self):
        return sum(len(g) for g in self.band_idx)

    def band_of_axis(self):
        out = np.zeros(self.dim, dtype=int)
        for b, idx in enumerate(self.band_idx):
            for i in idx:
                out[i] = b
        return out

    def block(self, b):
        idx = self.band_idx[b]
        return self.matrix[np.ix_(idx, idx)]

    def split(self, ell):
        """(u_idx, v_idx, w_idx) for stage ell (1-based band index)."""
        u_idx = [i for g in self.band_idx[:ell - 1] for i in g]
        v_idx = list(self.band_idx[ell - 1])
        w_idx = [i for g in self.band_idx[ell:] for i in g]
        return u_idx, v_idx, w_idx

    def stage_mus(self, ell):
        """(mu_ell_minus, mu_ell_plus, mu_next_minus, mu_top_plus)."""
        mg = self.margins
        mu_next = mg.mu_minus[ell] if ell < self.m else None
        return (mg.mu_minus[ell - 1], mg.mu_plus[ell - 1], mu_next,
                mg.mu_plus[-1])


def band_frame(model, params):
    """Group coordinates by band for a block-diagonal linear part."""
    lam = model.linear
    dec = cluster_eigenvalues(np.abs(np.linalg.eigvals(lam)),
                              params.gap_threshold)
    margins = Margins.default(dec, params.delta)
    n = lam.shape[0]
    part = LinearPart.from_matrix(lam, params.gap_threshold, dec,
                                  params.delta)
    assigned = np.full(n, -1)
    for b in range(dec.m):
        proj = part.projection(b)
        for i in range(n):
            if abs(proj[i, i]) > 0.5:
                assigned[i] = b
    if np.any(assigned < 0) or np.linalg.norm(
            lam - _masked_blocks(lam, assigned)) > 1e-10:
        raise ValueError(
            "linear part is not block-diagonal in band coordinates; "
            "conjugate the map with LinearPart.basis first")
    groups = [[] for _ in dec.bands]
    for i, b in enumerate(assigned):
        groups[b].append(i)
    return BandFrame([list(g) for g in groups], lam, margins)


def _masked_blocks(lam, assigned):
    out = np.zeros_like(lam)
    for b in set(assigned):
        idx = np.flatnonzero(assigned == b)
        out[np.ix_(idx, idx)] = lam[np.ix_(idx, idx)]
    return out


class ComposedMap:
    """F_ell = C o F o C^{-1} for the accumulated chain C, evaluated lazily."""

    def __init__(self, model, chain):
        self.model = model
        self.chain = chain
        self.dimension = model.dimension

    def f(self, pts):
        return self.chain.forward(self.model.f(self.chain.inverse(pts)))

    def df(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        pre = self.chain.inverse(pts)
        inner = self.model.df(pre)
        jac_in = np.linalg.inv(self.chain.jacobian(pre))
        jac_out = self.chain.jacobian(self.model.f(pre))
        return np.einsum("nij,njk,nkl->nil", jac_out, inner, jac_in)


class _ThetaWrapped:
    """F-tilde = Theta o F o Theta^{-1} for one stage's straightening."""

    def __init__(self, inner, theta):
        self.inner = inner
        self.theta = theta
        self.dimension = inner.dimension

    def f(self, pts):
        return self.theta.forward(self.inner.f(self.theta.inverse(pts)))

    def df(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        pre = self.theta.inverse(pts)
        jac_in = np.linalg.inv(self.theta.jacobian(pre))
        mid = self.inner.df(pre)
        jac_out = self.theta.jacobian(self.inner.f(pre))
        return np.einsum("nij,njk,nkl->nil", jac_out, mid, jac_in)


# -- polynomial graphs ----------------------------------------------------------


class PolyGraph:
    """Least-squares multivariate polynomial w -> R^r on a box.

    Coordinates are normalized to [-1, 1] per axis before building the
    total-degree monomial basis, which keeps the Vandermonde factor well
    conditioned for the low degrees used here.  Evaluation anywhere is
    the polynomial's own extension, so pull-back queries beyond the
    collocation box are stable.
    """

    def __init__(self, box, degree):
        self.box = box
        self.degree = int(degree)
        d = box.dim
        self.exponents = [e for e in iter_product(range(degree + 1), repeat=d)
                          if sum(e) <= degree]
        self.center = 0.5 * (box.lo + box.hi)
        self.halfwidth = 0.5 * (box.hi - box.lo)
        self.coeffs = None           # (n_terms, r)
        self.out_dim = None

    def _design(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = (pts - self.center) / self.halfwidth
        cols = []
        for e in self.exponents:
            col = np.ones(pts.shape[0])
            for a, p in enumerate(e):
                if p:
                    col = col * t[:, a] ** p
            cols.append(col)
        return np.stack(cols, axis=1)

    def fit_operator(self, nodes):
        """Pseudo-inverse of the design matrix at the collocation nodes."""
        return np.linalg.pinv(self._design(nodes))

    def set_values(self, pinv, values):
        values = np.atleast_2d(values)
        self.coeffs = pinv @ values
        self.out_dim = values.shape[1]
        return self

    def eval(self, pts):
        return self._design(pts) @ self.coeffs

    def derivative(self, pts, step=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.box.dim
        out = np.zeros((pts.shape[0], self.out_dim, d))
        t = (pts - self.center) / self.halfwidth
        for a in range(d):
            cols = []
            for e in self.exponents:
                if e[a] == 0:
                    cols.append(np.zeros(pts.shape[0]))
                    continue
                col = np.full(pts.shape[0], float(e[a]) / self.halfwidth[a])
                for a2, p in enumerate(e):
                    p_eff = p - 1 if a2 == a else p
                    if p_eff:
                        col = col * t[:, a2] ** p_eff
                cols.append(col)
            out[:, :, a] = np.stack(cols, axis=1) @ self.coeffs
        return out

    @property
    def grid_shape(self):
        return ()

    @property
    def out_shape(self):
        return (self.out_dim,)

    @property
    def order(self):
        return self.degree

    def to_table(self, resolution=17):
        axes = [np.linspace(self.box.lo[a], self.box.hi[a], resolution)
                for a in range(self.box.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return np.hstack([pts, self.eval(pts)])

    def slice_output(self, cols):
        out = PolyGraph(self.box, self.degree)
        out.coeffs = self.coeffs[:, cols]
        out.out_dim = len(cols)
        return out


# -- invariant graph -----------------------------------------------------------


@dataclass
class GraphReport:
    iterations: int
    final_delta: float
    invariance_residual: float
    origin_value: float
    origin_slope: float
    max_value: float
    pulled_max_value: float


def invariant_graph(map_fn, frame, ell, w_box, w_res, degree=8, tol=1e-13,
                    max_iter=40):
    """Graphs (h1, h2) over the slow bands, by collocation on coefficients.

    Solves the invariance equation F_ell(h(w), w) = (h(Cw), Cw) for the
    coefficients of a total-degree polynomial h by damped Newton with a
    per-step least-squares solve on collocation nodes.  The naive value
    pull-back iteration is unstable for coefficient orders above the gap
    exponent log mu_ell+ / log mu_next-, so the equation is solved
    directly; away from cross-band resonances the linearized system is
    uniformly invertible.  Returns (h1 | None, h2, GraphReport) with h1
    the u-part and h2 the v-part, both global polynomials.
    """
    u_idx, v_idx, w_idx = frame.split(ell)
    if not w_idx:
        raise ValueError("stage has no slow bands; no graph to compute")
    mu_minus, mu_plus, mu_next, _ = frame.stage_mus(ell)
    if log(mu_plus) / log(mu_next) - 1.0 <= 0.0:
        raise ConditionViolated("slow-band gap admits no graph exponent")
    c_block = frame.matrix[np.ix_(w_idx, w_idx)]
    uv_idx = u_idx + v_idx
    dim = frame.dim
    r = len(uv_idx)
    axes = [np.linspace(w_box.lo[a], w_box.hi[a], w_res[a])
            for a in range(w_box.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    w_nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    n_nodes = w_nodes.shape[0]
    poly = PolyGraph(w_box, degree)
    n_terms = len(poly.exponents)
    if n_nodes < n_terms:
        raise ValueError("not enough collocation nodes for the graph degree")
    design = poly._design(w_nodes)                 # (N, T)
    design_img = poly._design(w_nodes @ c_block.T)  # (N, T) at Cw
    scale = float(np.max(np.abs(w_box.hi)))
    coeffs = np.zeros((n_terms, r))

    def residual(c):
        pts = np.zeros((n_nodes, dim))
        pts[:, uv_idx] = design @ c
        pts[:, w_idx] = w_nodes
        img = map_fn.f(pts)
        if not np.all(np.isfinite(img)):
            raise GraphLeavesBox(
                f"stage {ell} graph solve produced non-finite values; "
                "the working covers are too small for this map")
        return img[:, uv_idx] - design_img @ c, pts

    res, pts = residual(coeffs)
    best = float(np.max(np.abs(res)))

    def floor_cap():
        # stagnation is acceptable at the degree-truncation level, which
        # scales with the graph magnitude (reported, never hidden)
        h_scale = float(np.max(np.abs(design @ coeffs))) if coeffs.any() \
            else 0.0
        return max(tol, 1e-4 * h_scale, 1e-9 * scale)

    for it in range(max_iter):
        if best < tol:
            break
        duv = map_fn.df(pts)[np.ix_(range(n_nodes), uv_idx, uv_idx)]
        # jacobian of the residual w.r.t. the coefficient matrix
        jac = np.einsum("nij,nt->nitj", duv, design).reshape(n_nodes * r, -1)
        eye_blocks = np.einsum("ij,nt->nitj", np.eye(r),
                               design_img).reshape(n_nodes * r, -1)
        jac = jac - eye_blocks
        step = np.linalg.lstsq(jac, -res.reshape(-1), rcond=None)[0]
        step = step.reshape(n_terms, r)
        damping = 1.0
        for _ in range(20):
            c_try = coeffs + damping * step
            res_try, pts_try = residual(c_try)
            if float(np.max(np.abs(res_try))) < best or best < tol:
                break
            damping *= 0.5
        new_best = float(np.max(np.abs(res_try)))
        stalled = new_best > 0.25 * best
        coeffs = c_try
        res, pts = res_try, pts_try
        best = min(best, new_best)
        if stalled:
            # Newton hit the evaluation-noise or truncation floor
            if best <= floor_cap():
                break
            raise NoConvergence(
                f"graph collocation stalled at residual={best:.3g} "
                f"(tol {tol:.3g}); a cross-band resonance may be too close "
                "or the polynomial degree too low")
    else:
        if best > floor_cap():
            raise NoConvergence(
                f"graph collocation did not reach residual "
                f"{floor_cap():.3g} in {max_iter} steps (last {best:.3g})")
    poly.coeffs = coeffs
    poly.out_dim = r
    h_vals = design @ coeffs
    origin = np.zeros((1, w_box.dim))
    h0 = float(np.max(np.abs(poly.eval(origin))))
    dh0 = float(np.max(np.abs(poly.derivative(origin))))
    pulled = poly.eval(np.linalg.solve(c_block, w_nodes.T).T)
    report = GraphReport(it + 1, best, best, h0, dh0,
                         float(np.max(np.abs(h_vals))),
                         float(np.max(np.abs(pulled))))
    n_u = len(u_idx)
    h1 = poly.slice_output(list(range(n_u))) if n_u else None
    h2 = poly.slice_output(list(range(n_u, r)))
    return h1, h2, report


def straighten(frame, ell, h1, h2):
    """GraphStraighten transform for the stage's split."""
    u_idx, v_idx, w_idx = frame.split(ell)
    return GraphStraighten(frame.dim, u_idx, v_idx, w_idx, h1, h2)


# -- band limit -----------------------------------------------------------------


@dataclass
class PsiLimitResult:
    grid: GridFunction
    decay: list                  # (k, sup successive difference)
    fitted_rate: float
    fit_r2: float
    eta: float
    stopped_at_floor: bool
    iterations: int


def _fit_decay(decay, min_points):
    rows = [(k, d) for k, d in decay if d > 0 and np.isfinite(d)]
    if len(rows) < min_points:
        return float("nan"), float("nan")
    ks = np.array([r[0] for r in rows], dtype=float)
    ys = np.log([r[1] for r in rows])
    slope, intercept = np.polyfit(ks, ys, 1)
    pred = slope * ks + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(slope)), r2


def psi_limit(map_fn, frame, ell, box, resolution, params):
    """Limit of B^{-k} (v-component of the k-th iterate) on a grid.

    Stops when successive differences drop below tol or start growing
    (the interpolation-noise floor under the B^{-k} amplification); the
    last pre-floor candidate is returned.  The fitted decay ratio is
    compared against the a-priori rate eta = mu_top+ mu_ell+ / mu_ell-.
    """
    u_idx, v_idx, w_idx = frame.split(ell)
    mu_minus, mu_plus, mu_next, mu_top = frame.stage_mus(ell)
    eta = mu_top * mu_plus / mu_minus
    if eta >= 1.0:
        raise BandConditionViolated(
            f"band {ell}: eta = {eta:.4g} >= 1; width condition fails")
    kmax = params.kmax
    if kmax is None:
        kmax = min(params.max_limit_iter,
                   ceil(log(max(params.tol, 1e-15)) / log(eta)) + 8)
    b_block = frame.block(ell - 1)
    b_inv = np.linalg.inv(b_block)
    mesh = np.meshgrid(*[np.linspace(box.lo[a], box.hi[a], resolution[a])
                         for a in range(box.dim)], indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    grid_shape = tuple(resolution)
    cur = nodes.copy()
    binv_pow = np.eye(len(v_idx))
    psi_best = nodes[:, v_idx].copy()
    decay = []
    floor = False
    prev_delta = np.inf
    k_stop = 0
    delta = 0.0
    for k in range(1, kmax + 1):
        cur = map_fn.f(cur)
        binv_pow = binv_pow @ b_inv
        psi_k = cur[:, v_idx] @ binv_pow.T
        delta = float(np.max(np.abs(psi_k - psi_best)))
        decay.append((k, delta))
        k_stop = k
        if delta < params.tol:
            psi_best = psi_k
            break
        if k >= 3 and delta > prev_delta:
            floor = True          # amplified noise overtook the decay
            break
        psi_best = psi_k
        prev_delta = delta
    else:
        raise NoConvergence(
            f"band limit did not settle below tol={params.tol} within "
            f"kmax={kmax} (last delta {delta:.3g})")
    clean = decay[:-1] if floor else decay
    rate, r2 = _fit_decay(clean, params.rate_fit_min_points)
    if np.isfinite(rate) and rate > min(1.5 * eta, 0.999):
        raise SlowDecay(
            f"fitted decay ratio {rate:.3g} exceeds 1.5 * eta = "
            f"{1.5 * eta:.3g}; shrink the working box")
    grid = GridFunction(box, psi_best.reshape(grid_shape + (len(v_idx),)),
                        (len(v_idx),), order=params.interp_order,
                        extrapolation="poly")
    return PsiLimitResult(grid, decay, rate, r2, eta, floor, k_stop)


# -- stage assembly -------------------------------------------------------------


class _PsiEvaluator:
    """psi = psi_tilde o theta, carrying the grid for export."""

    def __init__(self, psi_tilde, theta):
        self.grid = psi_tilde
        self.theta = theta

    def __call__(self, pts):
        if self.theta is None:
            return self.grid.eval(pts)
        return self.grid.eval(self.theta.forward(pts))


def build_phi(frame, ell, psi_result, theta, box, resolution, params):
    """Band transform Phi_ell = (u, Psi_ell(x), w) with gridded inverse."""
    u_idx, v_idx, w_idx = frame.split(ell)
    psi_fn = _PsiEvaluator(psi_result.grid, theta)
    mesh = np.meshgrid(*[np.linspace(box.lo[a], box.hi[a], resolution[a])
                         for a in range(box.dim)], indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    targets = nodes[:, v_idx]
    h_fd = 0.25 * float(np.min((box.hi - box.lo)
                               / (np.asarray(resolution) - 1)))

    def resid(v_flat):
        x = nodes.copy()
        x[:, v_idx] = v_flat
        return psi_fn(x) - targets

    def jac(v_flat):
        x = nodes.copy()
        x[:, v_idx] = v_flat
        out = np.zeros((x.shape[0], len(v_idx), len(v_idx)))
        for c in range(len(v_idx)):
            ep = x.copy()
            em = x.copy()
            ep[:, v_idx[c]] += h_fd
            em[:, v_idx[c]] -= h_fd
            out[:, :, c] = (psi_fn(ep) - psi_fn(em)) / (2 * h_fd)
        return out

    solved = damped_newton(resid, jac, targets, tol=max(params.tol, 1e-13))
    grid_shape = tuple(resolution)
    psi_hat = GridFunction(box, solved.reshape(grid_shape + (len(v_idx),)),
                           (len(v_idx),), order=params.interp_order,
                           extrapolation="poly")
    return VComponentTransform(frame.dim, v_idx, psi_fn, psi_hat)


@dataclass
class StageReport:
    ell: int
    graph: GraphReport | None
    decay: list
    fitted_rate: float
    fit_r2: float
    eta: float
    limit_iterations: int
    stopped_at_floor: bool
    structure_residual: float
    box_extent: np.ndarray


@dataclass
class CascadeResult:
    chain: TransformChain
    stages: list
    frame: BandFrame
    params: CascadeParams
    working_box: Box

    def conjugacy_residual(self, model, n_samples=400, seed=0):
        rng = np.random.default_rng(seed)
        pts = self.working_box.sample(n_samples, rng)
        lhs = self.chain.forward(model.f(pts))
        rhs = self.chain.forward(pts) @ self.frame.matrix.T
        return float(np.max(np.linalg.norm(lhs - rhs, axis=1)))


def _grid_resolution(box, spacing):
    res = []
    for a in range(box.dim):
        n = int(np.ceil((box.hi[a] - box.lo[a]) / spacing)) + 1
        res.append(max(n, 4))
    return res


def _pilot_graphs(model, frame, params, working_radius):
    """Coarse polynomial graphs of the raw map, one per straightened stage.

    Only their magnitudes matter: they size the per-stage grid extents
    before any conjugated map exists.
    """
    pilots = {}
    for ell in range(1, frame.m):
        u_idx, v_idx, w_idx = frame.split(ell)
        mus = frame.margins.mu_minus
        band_axis = frame.band_of_axis()
        lo, hi = [], []
        for i in w_idx:
            r = params.pad * working_radius / mus[band_axis[i]]
            lo.append(-r)
            hi.append(r)
        w_box = Box(np.array(lo), np.array(hi))
        w_res = [max(params.graph_degree + 3, 9)] * w_box.dim
        try:
            h1, h2, report = invariant_graph(
                model, frame, ell, w_box, w_res, degree=params.graph_degree,
                tol=1e-11, max_iter=params.max_graph_iter)
        except (GraphLeavesBox, NoConvergence) as exc:
            raise GraphLeavesBox(
                f"pilot graph for stage {ell} failed: {exc}") from exc
        pilots[ell] = (h1, h2, report)
    return pilots


def _max_graph_on_box(h1, h2, half_extents, n_per_axis=7):
    """Max |h| over a centered box, by a coarse sample mesh."""
    half = np.atleast_1d(half_extents)
    axes = [np.linspace(-h, h, n_per_axis) for h in half]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    worst = 0.0
    for g in (h1, h2):
        if g is not None:
            worst = max(worst, float(np.max(np.abs(g.eval(pts)))))
    return worst


def _stage_extents(frame, params, working_radius, pilots):
    """Per-stage grid half-extents from the pilot graph magnitudes.

    E_1 is the padded working box; E_ell covers the footprint of stage
    ell-1: its limit orbits shifted by the straightening offsets and its
    graph pull-back points.
    """
    safety = params.extent_safety
    band_axis = frame.band_of_axis()
    mus = frame.margins.mu_minus
    extents = {1: np.full(frame.dim, params.pad * working_radius)}
    for ell in range(2, frame.m + 1):
        prev = extents[ell - 1]
        u_idx, v_idx, w_idx = frame.split(ell - 1)
        out = prev.copy()
        if w_idx:
            h1, h2, _ = pilots[ell - 1]
            uv_idx = u_idx + v_idx
            # straightening offsets on the previous stage's own box
            h_prev = _max_graph_on_box(h1, h2, prev[w_idx])
            out[uv_idx] = prev[uv_idx] + safety * h_prev
            # pull-back points of the previous stage's graph solve
            pull = prev[w_idx] / np.array([mus[band_axis[i]] for i in w_idx])
            h_pull = _max_graph_on_box(h1, h2, pull)
            for j, i in enumerate(w_idx):
                out[i] = max(out[i], pull[j] * 1.05)
            out[uv_idx] = np.maximum(
                out[uv_idx],
                safety * h_pull + params.pad * working_radius)
        extents[ell] = out
    return extents


def linearize_contraction(model, params=None, frame=None):
    """Full cascade: returns the conjugating chain and per-stage reports.

    The map is used as given (no cutoff modification): the working domain
    must be large enough for the graph pull-backs, which the pilot pass
    sizes automatically; GraphLeavesBox reports when the model box cannot
    accommodate them.
    """
    params = params or CascadeParams()
    pre_chain = []
    work_model = model
    if frame is None:
        try:
            frame = band_frame(model, params)
        except ValueError:
            part = LinearPart.from_matrix(model.linear, params.gap_threshold,
                                          delta=params.delta)
            align = LinearTransform(part.basis_inv, label="band-alignment")
            work_model = ComposedMap(model, TransformChain([align],
                                                           model.dimension))
            work_model.linear = part.block_diagonal()
            work_model.box = model.box
            pre_chain = [align]
            frame = BandFrame([list(range(sl.start, sl.stop))
                               for sl in part.band_slices],
                              part.block_diagonal(), part.margins)
    dec = frame.margins.decomposition
    ok, rows = check_band_condition(dec)
    if not ok:
        raise ConditionViolated(
            "contraction band condition fails: " +
            "; ".join(f"band {r.band_index}: ratio {r.ratio:.4g} !< "
                      f"{r.bound:.4g}" for r in rows if not r.passed))
    working_radius = params.working_radius
    if working_radius is None:
        if model.box is None:
            raise ValueError("need a working radius or a model box")
        working_radius = 0.5 * model.box.radius
    working_box = Box.cube(working_radius, frame.dim)
    spacing = 2.0 * working_radius / (params.resolution - 1)
    pilots = _pilot_graphs(work_model, frame, params, working_radius)
    extents = _stage_extents(frame, params, working_radius, pilots)
    if model.box is not None:
        top = extents[frame.m]
        needed = 1.2 * float(np.max(top))
        if needed > model.box.radius:
            raise GraphLeavesBox(
                f"stage grids need radius {needed:.4g} but the model box "
                f"has {model.box.radius:.4g}; enlarge the domain or shrink "
                "the working radius")
    chain_list = []
    stages = []
    for ell in range(frame.m, 0, -1):
        u_idx, v_idx, w_idx = frame.split(ell)
        stage_box = Box(-extents[ell], extents[ell])
        resolution = _grid_resolution(stage_box, spacing)
        current = ComposedMap(work_model,
                              TransformChain(chain_list[:], frame.dim))
        theta = None
        graph_report = None
        if w_idx:
            w_box = Box(stage_box.lo[w_idx], stage_box.hi[w_idx])
            w_res = _grid_resolution(w_box, spacing)
            h1, h2, graph_report = invariant_graph(
                current, frame, ell, w_box, w_res,
                degree=params.graph_degree, tol=params.graph_tol,
                max_iter=params.max_graph_iter)
            theta = straighten(frame, ell, h1, h2)
            stage_map = _ThetaWrapped(current, theta)
        else:
            stage_map = current
        psi_res = psi_limit(stage_map, frame, ell, stage_box, resolution,
                            params)
        phi = build_phi(frame, ell, psi_res, theta, stage_box, resolution,
                        params)
        # structural check: the v and w components of the new map are linear
        rng = np.random.default_rng(1234 + ell)
        sample = working_box.sample(200, rng)
        nxt = ComposedMap(work_model,
                          TransformChain(chain_list + [phi], frame.dim))
        img = nxt.f(sample)
        lin = sample @ frame.matrix.T
        vw = v_idx + w_idx
        structure = float(np.max(np.abs(img[:, vw] - lin[:, vw])))
        stages.append(StageReport(ell, graph_report, psi_res.decay,
                                  psi_res.fitted_rate, psi_res.fit_r2,
                                  psi_res.eta, psi_res.iterations,
                                  psi_res.stopped_at_floor, structure,
                                  extents[ell]))
        chain_list.append(phi)
    chain = TransformChain(pre_chain + chain_list, frame.dim)
    return CascadeResult(chain, stages, frame, params, working_box)


# -- growth-rate diagnostics ----------------------------------------------------


@dataclass
class GrowthDiagnostics:
    ks: list
    block_norms: dict            # name -> list of per-k max norms
    rates: dict                  # name -> fitted per-step log-rate
    bounds: dict                 # name -> log of the predicted base


def growth_bound_diagnostics(stage_map, frame, ell, box, kmax=12,
                             n_samples=60, seed=0):
    """Fit the growth rates of the iterate-derivative blocks of a stage.

    Purely diagnostic: reports fitted per-step log-rates for the (u, v)
    rows of D(F-tilde^k) against log mu_ell+, and for the one-step blocks
    along the orbit against log mu_top+ / log mu_ell+.
    """
    u_idx, v_idx, w_idx = frame.split(ell)
    mu_minus, mu_plus, mu_next, mu_top = frame.stage_mus(ell)
    b_block = frame.block(ell - 1)
    rng = np.random.default_rng(seed)
    pts = box.sample(n_samples, rng)
    n = frame.dim
    jac = np.broadcast_to(np.eye(n), (n_samples, n, n)).copy()
    cur = pts.copy()
    names = ["a_hat", "b_hat", "c_hat", "a", "b", "c",
             "a1_orbit", "b1_minus_B_orbit", "c1_orbit"]
    norms = {name: [] for name in names}
    ks = list(range(1, kmax + 1))

    def block(mat, rows, cols):
        if not rows or not cols:
            return 0.0
        sub = mat[np.ix_(range(n_samples), rows, cols)]
        return float(np.max(np.linalg.norm(sub, axis=(1, 2))))

    for _ in ks:
        step = stage_map.df(cur)
        jac = np.einsum("nij,njk->nik", step, jac)
        cur = stage_map.f(cur)
        one = stage_map.df(cur)
        norms["a_hat"].append(block(jac, u_idx, u_idx))
        norms["b_hat"].append(block(jac, u_idx, v_idx))
        norms["c_hat"].append(block(jac, u_idx, w_idx))
        norms["a"].append(block(jac, v_idx, u_idx))
        norms["b"].append(block(jac, v_idx, v_idx))
        norms["c"].append(block(jac, v_idx, w_idx))
        norms["a1_orbit"].append(block(one, v_idx, u_idx))
        sub = one[np.ix_(range(n_samples), v_idx, v_idx)] - b_block
        norms["b1_minus_B_orbit"].append(
            float(np.max(np.linalg.norm(sub, axis=(1, 2)))))
        norms["c1_orbit"].append(block(one, v_idx, w_idx))
    bounds = {name: log(mu_plus) for name in
              ["a_hat", "b_hat", "c_hat", "a", "b", "c", "c1_orbit"]}
    bounds["a1_orbit"] = log(mu_top)
    bounds["b1_minus_B_orbit"] = log(mu_top)
    rates = {}
    for name, vals in norms.items():
        arr = np.asarray(vals)
        # fit only the leading geometric-decay segment: once the ratios
        # leave the expected regime the straightening truncation floor
        # has taken over
        r_cut = min(3.0 * float(np.exp(bounds[name])), 0.97)
        n_keep = 1 if arr[0] > 1e-14 else 0
        while n_keep and n_keep < arr.size:
            if arr[n_keep] <= 1e-14 or arr[n_keep] > r_cut * arr[n_keep - 1]:
                break
            n_keep += 1
        if n_keep >= 3:
            # skip the K-constant transient when there is enough tail
            lo = 2 if n_keep >= 5 else 0
            rates[name] = float(np.polyfit(
                np.asarray(ks[lo:n_keep], float),
                np.log(arr[lo:n_keep]), 1)[0])
        else:
            rates[name] = float("nan")
    return GrowthDiagnostics(ks, norms, rates, bounds)
