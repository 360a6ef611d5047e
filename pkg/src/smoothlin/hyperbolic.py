"""Full linearization pipeline for hyperbolic (mixed) spectra.

Order of battle: straighten the stable and unstable manifolds so the two
invariant subspaces become exact axes, cut the map off outside a ball so
the Lyapunov-Perron solver has global bounds, build both invariant
foliations, read off the decoupling coordinates from the leaf-axis
intersections, linearize the contraction and expansion factors by the
cascade (the expansion through its inverse), and compose everything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contraction import CascadeParams, linearize_contraction
from .dynamics import MapModel, bump_modify, inverse_model
from .errors import ConditionViolated, NoConvergence
from .grids import Box, GridFunction
from .lp_foliation import (BlockSplitting, LPParameters, ProductDomain,
                           stable_foliation, unstable_foliation)
from .spectral import (Margins, check_all_conditions, cluster_eigenvalues)
from .transforms import (AxisStraighten, BlockFactors, FoliationCoordinates,
                         TransformChain)


@dataclass
class HyperbolicParams:
    """Knobs of the mixed-spectrum pipeline."""

    r0: float = 0.022             # cutoff inner radius
    r1: float = 0.066             # cutoff outer radius
    reporting_radius: float | None = None   # default r0 / 2
    lp_resolution: int = 21       # foliation grid nodes per x-axis
    lp_params: LPParameters | None = None   # None: auto weights
    n_seq: int = 8
    k_tail: int = 32
    lp_tol: float = 1e-9
    manifold_resolution: int = 33
    manifold_tol: float = 1e-12
    max_manifold_iter: int = 300
    cascade: CascadeParams = field(default_factory=lambda: CascadeParams(
        resolution=33))
    gap_threshold: float = 0.2
    delta: float | None = None
    eta_target: float | None = None
    seed: int = 0


@dataclass
class ManifoldPair:
    """Stable and unstable manifold graphs with their residuals."""

    g_s: GridFunction             # X_minus -> X_plus
    g_u: GridFunction             # X_plus -> X_minus
    s_residual: float
    u_residual: float
    s_iterations: int
    u_iterations: int

    def origin_flatness(self):
        zero_m = np.zeros((1, self.g_s.box.dim))
        zero_p = np.zeros((1, self.g_u.box.dim))
        return (float(np.max(np.abs(self.g_s.eval(zero_m)))),
                float(np.max(np.abs(self.g_s.derivative(zero_m)))),
                float(np.max(np.abs(self.g_u.eval(zero_p)))),
                float(np.max(np.abs(self.g_u.derivative(zero_p)))))


class _WrappedMap:
    """Map conjugated by a transform chain, with a MapModel-ish surface."""

    def __init__(self, model, chain):
        self.model = model
        self.chain = chain
        self.dimension = model.dimension
        self.linear = model.linear
        self.box = model.box

    def f(self, pts):
        return self.chain.forward(self.model.f(self.chain.inverse(pts)))

    def df(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        pre = self.chain.inverse(pts)
        inner = self.model.df(pre)
        jac_in = np.linalg.inv(self.chain.jacobian(pre))
        jac_out = self.chain.jacobian(self.model.f(pre))
        return np.einsum("nij,njk,nkl->nil", jac_out, inner, jac_in)

    def nonlinearity(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.f(pts) - pts @ self.linear.T

    def nonlinearity_jacobian(self, pts):
        return self.df(pts) - self.linear


def _unstable_graph(map_like, splitting, radius, resolution, tol, max_iter):
    """Graph over the expanding block by the inward-pulling iteration.

    Update: z solves (plus part of F)(g(z), z) = w, then
    g_new(w) = (minus part of F)(g(z), z); the base inverse contracts, so
    all queries stay inside the box.
    """
    mi = list(splitting.minus_idx)
    pi = list(splitting.plus_idx)
    lam_plus_inv = np.linalg.inv(splitting.lam_plus)
    box = Box.cube(radius, len(pi))
    nodes_ax = [np.linspace(-radius, radius, resolution) for _ in pi]
    mesh = np.meshgrid(*nodes_ax, indexing="ij")
    w_nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    grid_shape = tuple(resolution for _ in pi)
    g_vals = np.zeros((w_nodes.shape[0], len(mi)))
    dim = len(mi) + len(pi)
    it_count = 0
    for it in range(max_iter):
        it_count = it + 1
        g_fn = GridFunction(box, g_vals.reshape(grid_shape + (len(mi),)),
                            (len(mi),), order=3, extrapolation="poly")
        z = w_nodes @ lam_plus_inv.T
        # newton solve for the base preimage of each node
        for _ in range(60):
            pts = np.zeros((z.shape[0], dim))
            pts[:, mi] = g_fn.eval(z)
            pts[:, pi] = z
            img = map_like.f(pts)
            res = img[:, pi] - w_nodes
            if float(np.max(np.abs(res))) < 0.1 * tol:
                break
            jac_full = map_like.df(pts)
            dg = g_fn.derivative(z)
            # chain rule: d(img_plus)/dz with minus components slaved to g
            jac = jac_full[np.ix_(range(z.shape[0]), pi, pi)] \
                + np.einsum("nij,njk->nik",
                            jac_full[np.ix_(range(z.shape[0]), pi, mi)], dg)
            z = z - np.linalg.solve(jac, res[..., None])[..., 0]
        g_new = img[:, mi]
        delta = float(np.max(np.abs(g_new - g_vals)))
        g_vals = g_new
        if delta < tol:
            break
    else:
        raise NoConvergence(
            f"manifold graph iteration stalled at delta={delta:.3g}")
    g_fn = GridFunction(box, g_vals.reshape(grid_shape + (len(mi),)),
                        (len(mi),), order=3, extrapolation="poly")
    # invariance residual at nodes
    pts = np.zeros((w_nodes.shape[0], dim))
    pts[:, mi] = g_vals
    pts[:, pi] = w_nodes
    img = map_like.f(pts)
    inside = np.all(np.abs(img[:, pi]) <= radius, axis=1)
    resid = np.abs(img[:, mi] - g_fn.eval(img[:, pi].clip(-radius, radius)))
    resid = float(np.max(resid[inside])) if np.any(inside) else float("nan")
    return g_fn, resid, it_count


def stable_unstable_manifolds(model, splitting, radius, resolution=33,
                              tol=1e-12, max_iter=300):
    """Both manifold graphs of the raw map on boxes of the given radius.

    The unstable graph is computed under the map itself, the stable graph
    under its Newton inverse; both iterations only pull inward, so the
    raw (un-cut) map is the right object and the graphs agree with those
    of any cutoff modification near the origin.
    """
    g_u, u_res, u_it = _unstable_graph(model, splitting, radius, resolution,
                                       tol, max_iter)
    inv = inverse_model(model)
    g_s, s_res, s_it = _unstable_graph(inv, splitting.swapped_inverse(),
                                       radius, resolution, tol, max_iter)
    return ManifoldPair(g_s, g_u, s_res, u_res, s_it, u_it)


def straighten_manifolds(model, splitting, radius, resolution=33,
                         tol=1e-12, max_iter=300):
    """Sequentially straighten the unstable then the stable manifold.

    Returns (theta1, theta2, straightened map, ManifoldPair); the stable
    graph is recomputed after the first straightening so both axes are
    exactly invariant for the result.
    """
    mi = list(splitting.minus_idx)
    pi = list(splitting.plus_idx)
    dim = model.dimension
    g_u, u_res, u_it = _unstable_graph(model, splitting, radius, resolution,
                                       tol, max_iter)
    theta1 = AxisStraighten(dim, mi, pi, g_u, which="unstable")
    mid = _WrappedMap(model, TransformChain([theta1], dim))
    mid_inv = _WrappedMap(inverse_model(model),
                          TransformChain([theta1], dim))
    g_s, s_res, s_it = _unstable_graph(mid_inv, splitting.swapped_inverse(),
                                       radius, resolution, tol, max_iter)
    theta2 = AxisStraighten(dim, mi, pi, g_s, which="stable")
    chain = TransformChain([theta1, theta2], dim)
    straightened = _WrappedMap(model, chain)
    pair = ManifoldPair(g_s, g_u, s_res, u_res, s_it, u_it)
    return theta1, theta2, straightened, pair


def axis_invariance_residual(map_like, splitting, radius, n_samples=200,
                             seed=0):
    """How far the straightened map moves the two axes."""
    rng = np.random.default_rng(seed)
    mi = list(splitting.minus_idx)
    pi = list(splitting.plus_idx)
    dim = len(mi) + len(pi)
    pts = np.zeros((n_samples, dim))
    pts[:, mi] = Box.cube(radius, len(mi)).sample(n_samples, rng)
    res_minus = float(np.max(np.abs(map_like.f(pts)[:, pi])))
    pts = np.zeros((n_samples, dim))
    pts[:, pi] = Box.cube(radius, len(pi)).sample(n_samples, rng)
    res_plus = float(np.max(np.abs(map_like.f(pts)[:, mi])))
    return max(res_minus, res_plus)


@dataclass
class DecouplingResult:
    """Decoupling transform and the two factor maps."""

    psi: FoliationCoordinates
    f_minus: MapModel
    f_plus: MapModel
    identity_residual: float
    dpsi_origin_residual: float


def decouple(map_straightened, splitting, stable_fol, unstable_fol,
             reporting_box, factor_box_radius=None, tol=1e-6, n_samples=300,
             seed=0):
    """Foliation coordinates and the split factor maps.

    psi(x) reads the axis intersections of the two leaves through x; the
    factor maps are the straightened map restricted to the axes.  The
    decoupling identity residual is measured on the reporting box.
    """
    mi = list(splitting.minus_idx)
    pi = list(splitting.plus_idx)
    dim = len(mi) + len(pi)
    psi = FoliationCoordinates(dim, mi, pi, stable_fol.q0, unstable_fol.q0)

    def f_minus_fn(xm):
        xm = np.atleast_2d(np.asarray(xm, dtype=float))
        pts = np.zeros((xm.shape[0], dim))
        pts[:, mi] = xm
        return map_straightened.f(pts)[:, mi]

    def df_minus_fn(xm):
        xm = np.atleast_2d(np.asarray(xm, dtype=float))
        pts = np.zeros((xm.shape[0], dim))
        pts[:, mi] = xm
        return map_straightened.df(pts)[np.ix_(range(xm.shape[0]), mi, mi)]

    def f_plus_fn(xp):
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        pts = np.zeros((xp.shape[0], dim))
        pts[:, pi] = xp
        return map_straightened.f(pts)[:, pi]

    def df_plus_fn(xp):
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        pts = np.zeros((xp.shape[0], dim))
        pts[:, pi] = xp
        return map_straightened.df(pts)[np.ix_(range(xp.shape[0]), pi, pi)]

    box_radius = factor_box_radius
    if box_radius is None:
        box_radius = stable_fol.domain.x_box.radius
    f_minus = MapModel(len(mi), f_minus_fn, df_minus_fn,
                       splitting.lam_minus, box=Box.cube(box_radius, len(mi)),
                       name="factor-minus")
    f_plus = MapModel(len(pi), f_plus_fn, df_plus_fn,
                      splitting.lam_plus, box=Box.cube(box_radius, len(pi)),
                      name="factor-plus")
    rng = np.random.default_rng(seed)
    pts = reporting_box.sample(n_samples, rng)
    lhs = psi.forward(map_straightened.f(pts))
    mid = psi.forward(pts)
    rhs = np.zeros_like(lhs)
    rhs[:, mi] = f_minus.f(mid[:, mi])
    rhs[:, pi] = f_plus.f(mid[:, pi])
    identity_residual = float(np.max(np.linalg.norm(lhs - rhs, axis=1)))
    h_fd = 1e-6 * reporting_box.radius
    origin = np.zeros((1, dim))
    jac = np.zeros((dim, dim))
    for a in range(dim):
        ep = origin.copy()
        em = origin.copy()
        ep[0, a] += h_fd
        em[0, a] -= h_fd
        jac[:, a] = (psi.forward(ep) - psi.forward(em))[0] / (2 * h_fd)
    dpsi_res = float(np.linalg.norm(jac - np.eye(dim)))
    return DecouplingResult(psi, f_minus, f_plus, identity_residual, dpsi_res)


@dataclass
class HyperbolicResult:
    chain: TransformChain
    splitting: BlockSplitting | None
    report: dict
    stable_fol: object = None
    unstable_fol: object = None
    decoupling: DecouplingResult | None = None
    manifolds: ManifoldPair | None = None
    cascade_minus: object = None
    cascade_plus: object = None
    linear: np.ndarray | None = None   # target linear part of the chain

    def conjugacy_residual(self, model, box, n_samples=400, seed=0):
        rng = np.random.default_rng(seed)
        pts = box.sample(n_samples, rng)
        lam = self.linear if self.linear is not None else model.linear
        lhs = self.chain.forward(model.f(pts))
        rhs = self.chain.forward(pts) @ lam.T
        return float(np.max(np.linalg.norm(lhs - rhs, axis=1)))


def linearize_hyperbolic(model, params=None):
    """Theorem-level pipeline for a mixed spectrum.

    Pure contractions dispatch to the cascade directly; pure expansions
    run the cascade on the Newton inverse (the same chain conjugates the
    original map).  Mixed spectra run the full manifold / foliation /
    decoupling / factor-cascade pipeline.
    """
    params = params or HyperbolicParams()
    orig_model = model
    evals = np.linalg.eigvals(model.linear)
    dec = cluster_eigenvalues(np.abs(evals), params.gap_threshold)
    report = {"bands": [(b.lambda_minus, b.lambda_plus) for b in dec.bands],
              "d": dec.d, "m": dec.m}
    if dec.d == dec.m:
        cascade = linearize_contraction(model, params.cascade)
        report["mode"] = "contraction"
        report["conjugacy_residual"] = cascade.conjugacy_residual(model)
        return HyperbolicResult(cascade.chain, None, report,
                                cascade_minus=cascade)
    if dec.d == 0:
        inv = inverse_model(model)
        inv_model = MapModel(model.dimension, inv.f, inv.df, inv.linear,
                             box=model.box, name=model.name + "-inv")
        cascade = linearize_contraction(inv_model, params.cascade)
        report["mode"] = "expansion"
        res = cascade.conjugacy_residual(inv_model)
        report["conjugacy_residual_inverse"] = res
        return HyperbolicResult(cascade.chain, None, report,
                                cascade_plus=cascade)
    report["mode"] = "hyperbolic"
    margins = Margins.default(dec, params.delta)
    conditions = check_all_conditions(dec, margins)
    report["conditions"] = conditions
    if not conditions["overall"]:
        raise ConditionViolated(
            "gap/band conditions fail for this spectrum; see the report")
    n_minus = sum(1 for z in evals if abs(z) < 1.0)
    align = None
    try:
        splitting = _aligned_splitting(model, n_minus)
    except ValueError:
        # bring the linear part to band-ordered block form first
        from .spectral import LinearPart
        from .transforms import LinearTransform
        part = LinearPart.from_matrix(model.linear, params.gap_threshold,
                                      delta=params.delta)
        align = LinearTransform(part.basis_inv, label="band-alignment")
        chainA = TransformChain([align], model.dimension)
        wrapped = _WrappedMap(model, chainA)
        wrapped.linear = part.block_diagonal()
        scale = float(np.linalg.norm(part.basis_inv, 2))
        box = Box.cube(model.box.radius / max(scale, 1.0), model.dimension) \
            if model.box is not None else None
        model = MapModel(model.dimension, wrapped.f, wrapped.df,
                         wrapped.linear, box=box,
                         name=model.name + "-aligned")
        splitting = _aligned_splitting(model, n_minus)
    reporting_radius = params.reporting_radius
    if reporting_radius is None:
        reporting_radius = 0.5 * params.r0
    reporting_box = Box.cube(reporting_radius, model.dimension)
    # 1. manifolds and straightening of the raw map
    theta1, theta2, straightened, pair = straighten_manifolds(
        model, splitting, radius=1.3 * params.r1,
        resolution=params.manifold_resolution, tol=params.manifold_tol,
        max_iter=params.max_manifold_iter)
    report["manifold_residuals"] = (pair.s_residual, pair.u_residual)
    report["axis_residual"] = axis_invariance_residual(
        straightened, splitting, params.r0, seed=params.seed)
    # 2. cutoff so the foliation solver has global bounds
    hat_model = MapModel(model.dimension, straightened.f, straightened.df,
                         model.linear, box=None, name=model.name + "-hat")
    mod, bump = bump_modify(hat_model, params.r0, params.r1,
                            eta_target=params.eta_target, seed=params.seed)
    report["bump_eta"] = bump.eta
    # 3. both foliations
    lp_params = params.lp_params
    if lp_params is None:
        lp_params = LPParameters.auto(splitting, bump.eta,
                                      n_seq=params.n_seq,
                                      k_tail=params.k_tail,
                                      tol=params.lp_tol)
    # the leaf grids get evaluated at map images of the reporting box,
    # so the foliation domain must cover the expansion stretch
    stretch = 1.15 * max(1.05, float(np.linalg.norm(model.linear, 2)))
    omega_radius = stretch * reporting_radius
    omega = ProductDomain(Box.cube(omega_radius, model.dimension),
                          params.lp_resolution, splitting)
    st_fol = stable_foliation(mod, splitting, lp_params, omega, eta=bump.eta)
    omega_u = ProductDomain(Box.cube(omega_radius, model.dimension),
                            params.lp_resolution, splitting.swapped_inverse())
    un_fol = unstable_foliation(mod, splitting, domain=omega_u, eta=bump.eta,
                                nonlinearity_radius=params.r1)
    report["lp_stable_iterations"] = len(st_fol.solution.log.rows)
    report["lp_unstable_iterations"] = len(un_fol.solution.log.rows)
    report["lp_stable_contraction"] = st_fol.solution.log.tail_contraction()
    report["lp_estimates"] = st_fol.solution.ctx.contraction_estimates()
    report["b1_residuals"] = (st_fol.b1_residual, un_fol.b1_residual)
    # 4. decoupling coordinates (factor maps live on the manifold boxes)
    dec_result = decouple(straightened, splitting, st_fol, un_fol,
                          reporting_box, factor_box_radius=1.2 * params.r1,
                          seed=params.seed)
    report["decoupling_residual"] = dec_result.identity_residual
    report["dpsi_origin"] = dec_result.dpsi_origin_residual
    # 5. factor linearizations (expansion through its inverse)
    cas_minus_params = params.cascade
    cas_minus = linearize_contraction(
        dec_result.f_minus,
        _factor_params(cas_minus_params, reporting_radius))
    inv_plus = inverse_model(dec_result.f_plus)
    inv_plus_model = MapModel(dec_result.f_plus.dimension, inv_plus.f,
                              inv_plus.df, inv_plus.linear,
                              box=dec_result.f_plus.box, name="factor-plus-inv")
    cas_plus = linearize_contraction(
        inv_plus_model, _factor_params(params.cascade, reporting_radius))
    report["factor_minus_residual"] = cas_minus.conjugacy_residual(
        dec_result.f_minus)
    report["factor_plus_residual_inverse"] = cas_plus.conjugacy_residual(
        inv_plus_model)
    factors = BlockFactors(model.dimension, list(splitting.minus_idx),
                           list(splitting.plus_idx), cas_minus.chain,
                           cas_plus.chain)
    steps = [theta1, theta2, dec_result.psi, factors]
    if align is not None:
        steps = [align] + steps
    chain = TransformChain(steps, model.dimension)
    result = HyperbolicResult(chain, splitting, report, st_fol, un_fol,
                              dec_result, pair, cas_minus, cas_plus,
                              linear=model.linear)
    rng = np.random.default_rng(params.seed)
    pts = reporting_box.sample(400, rng)
    if align is not None:
        pts = align.inverse(pts)     # sample in the original coordinates
    lhs = chain.forward(orig_model.f(pts))
    rhs = chain.forward(pts) @ model.linear.T
    report["conjugacy_residual"] = float(
        np.max(np.linalg.norm(lhs - rhs, axis=1)))
    report["reporting_radius"] = reporting_radius
    return result


def _factor_params(base, reporting_radius):
    out = CascadeParams(**{k: getattr(base, k) for k in
                           base.__dataclass_fields__})
    out.working_radius = reporting_radius
    return out


def _aligned_splitting(model, n_minus):
    """Splitting for a linear part already block-ordered minus-first."""
    lam = model.linear
    n = lam.shape[0]
    off_blocks = np.linalg.norm(lam[:n_minus, n_minus:]) \
        + np.linalg.norm(lam[n_minus:, :n_minus])
    if off_blocks > 1e-10:
        raise ValueError(
            "linear part is not block-aligned (minus coordinates first); "
            "conjugate the map with LinearPart.basis first")
    mods_first = np.abs(np.linalg.eigvals(lam[:n_minus, :n_minus]))
    if np.any(mods_first >= 1.0):
        raise ValueError("leading block must be the contracting one")
    return BlockSplitting.from_linear(lam, n_minus)
