import numpy as np
import pytest

from smoothlin import dynamics, lp_foliation as lp
from smoothlin.errors import EtaTooLarge, TailTooShort
from smoothlin.grids import Box

SPLIT = lp.BlockSplitting.from_linear(np.diag([0.5, 2.0]), 1)


def linear_saddle():
    return dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (2.0, (0, 1), 1)], box=Box.cube(1.0, 2))


def coupled_saddle():
    model = dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (1.0, (1, 1), 0), (2.0, (0, 1), 1)],
        box=Box.cube(0.3, 2), name="coupled")
    mod, bump = dynamics.bump_modify(model, 0.022, 0.066)
    return model, mod, bump


def quad_saddle():
    model = dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (1.0, (0, 2), 0), (2.0, (0, 1), 1)],
        box=Box.cube(0.3, 2), name="quad")
    mod, bump = dynamics.bump_modify(model, 0.022, 0.066)
    return model, mod, bump


def small_domain(res=9):
    return lp.ProductDomain(Box.cube(0.02, 2), res, SPLIT)


def test_linear_map_one_application_fixed_point():
    model = linear_saddle()
    params = lp.LPParameters.auto(SPLIT)
    dom = small_domain()
    ctx = lp.LPContext(model, SPLIT, params, dom)
    v0 = lp.SequenceFamily.zeros(dom, params.k_tail + 1, (2,), params.gamma1)
    v1 = lp.operator_T(v0, ctx)
    v2 = lp.operator_T(v1, ctx)
    assert v2.weighted_delta(v1) == 0.0
    # entries are the affine seed embedded in the contracting block
    vals = v1.values.reshape(params.k_tail + 1, dom.nx, dom.ny, 2)
    for n in (0, 2, 5):
        expect = 0.5 ** n * (dom.y_nodes[None, :, 0]
                             - dom.x_nodes[:, None, 0])
        assert np.allclose(vals[n][..., 0], expect, atol=1e-15)
        assert np.allclose(vals[n][..., 1], 0.0, atol=1e-15)


def test_linear_map_fiber_operator_exact():
    model = linear_saddle()
    params = lp.LPParameters.auto(SPLIT)
    dom = small_domain()
    ctx = lp.LPContext(model, SPLIT, params, dom)
    v = lp.SequenceFamily.zeros(dom, params.k_tail + 1, (2,), params.gamma1)
    w = lp.SequenceFamily.zeros(dom, params.k_tail + 1, (2, 3), params.gamma2)
    w1 = lp.operator_S(v, w, ctx)
    for n in (0, 1, 4):
        got = w1.values[n].reshape(dom.nx * dom.ny, 2, 3)[0]
        expect = np.zeros((2, 3))
        expect[0, 0] = -0.5 ** n    # d/dx_minus of the affine seed
        expect[0, 2] = 0.5 ** n     # d/dy of the affine seed
        assert np.allclose(got, expect, atol=1e-15)


def test_operator_contraction_measured_below_estimate():
    _, mod, bump = coupled_saddle()
    params = lp.LPParameters.auto(SPLIT, bump.eta)
    dom = small_domain()
    ctx = lp.LPContext(mod, SPLIT, params, dom, eta=bump.eta)
    c_t, c_s = ctx.contraction_estimates()
    assert 0 < c_t < 1 and 0 < c_s < 1
    rng = np.random.default_rng(0)
    shape = (params.k_tail + 1,) + dom.grid_shape() + (2,)
    worst_t = 0.0
    for _ in range(5):
        a = lp.SequenceFamily(dom, rng.normal(0, 1e-3, shape), params.gamma1)
        b = lp.SequenceFamily(dom, rng.normal(0, 1e-3, shape), params.gamma1)
        num = lp.operator_T(a, ctx).weighted_delta(lp.operator_T(b, ctx))
        worst_t = max(worst_t, num / a.weighted_delta(b))
    assert worst_t <= c_t
    # fiber contraction at fixed base
    wshape = (params.k_tail + 1,) + dom.grid_shape() + (2, 3)
    v_fix = lp.SequenceFamily(dom, rng.normal(0, 1e-3, shape), params.gamma1)
    worst_s = 0.0
    for _ in range(5):
        wa = lp.SequenceFamily(dom, rng.normal(0, 1e-3, wshape),
                               params.gamma2)
        wb = lp.SequenceFamily(dom, rng.normal(0, 1e-3, wshape),
                               params.gamma2)
        num = lp.operator_S(v_fix, wa, ctx).weighted_delta(
            lp.operator_S(v_fix, wb, ctx))
        worst_s = max(worst_s, num / wa.weighted_delta(wb))
    assert worst_s <= c_s


def test_solve_coupled_planar():
    _, mod, bump = coupled_saddle()
    params = lp.LPParameters.auto(SPLIT, bump.eta)
    dom = lp.ProductDomain(Box.cube(0.026, 2), 21, SPLIT)
    fol = lp.stable_foliation(mod, SPLIT, params, dom, eta=bump.eta)
    assert fol.b1_residual < 1e-13
    assert fol.b2_residual < 1e-13
    assert lp.verify_lp_equivalence(mod, fol, seed=1) < 1e-4
    assert lp.foliation_invariance_residual(mod, fol, seed=1) < 1e-4
    # iteration contracts at a measured rate below the estimate
    measured = fol.solution.log.tail_contraction()
    assert measured <= fol.solution.ctx.contraction_estimates()[0]
    # the leaves of this product-structured map are exactly horizontal
    rng = np.random.default_rng(2)
    xs = Box.cube(0.012, 2).sample(100, rng)
    ys = Box.cube(0.012, 1).sample(100, rng)
    assert np.max(np.abs(fol.h(xs, ys)[:, 0] - xs[:, 1])) < 1e-12


def test_lp_equivalence_halves_under_refinement():
    _, mod, bump = coupled_saddle()
    params = lp.LPParameters.auto(SPLIT, bump.eta)
    residuals = []
    for res in (11, 21):
        dom = lp.ProductDomain(Box.cube(0.026, 2), res, SPLIT)
        fol = lp.stable_foliation(mod, SPLIT, params, dom, eta=bump.eta)
        residuals.append(lp.verify_lp_equivalence(mod, fol, seed=3))
    assert residuals[1] <= 0.5 * residuals[0]


def test_gamma_independence():
    _, mod, bump = coupled_saddle()
    dom = lp.ProductDomain(Box.cube(0.026, 2), 13, SPLIT)
    q0s = []
    for g1, g2 in ((0.62, 1.45), (0.72, 1.62)):
        params = lp.LPParameters(g1, g2, tol=1e-10)
        fol = lp.stable_foliation(mod, SPLIT, params, dom, eta=bump.eta)
        q0s.append(fol.solution.v.values[0].copy())
    assert np.max(np.abs(q0s[0] - q0s[1])) < 1e-5


def test_unstable_foliation_contains_unstable_manifold():
    # the leaf through the origin of the unstable foliation is the
    # unstable manifold; for the quadratic saddle its graph solves
    # g(2y) = 0.5 g(y) + y^2, i.e. g(y) = (2/7) y^2
    _, mod, bump = quad_saddle()
    dom = lp.ProductDomain(Box.cube(0.026, 2), 17, SPLIT.swapped_inverse())
    fol = lp.unstable_foliation(mod, SPLIT, domain=dom, eta=bump.eta,
                                nonlinearity_radius=0.066)
    ys = np.linspace(-0.01, 0.01, 41)[:, None]
    leaf = fol.leaf_point(np.zeros((41, 2)), ys)
    assert np.max(np.abs(leaf[:, 1] - ys[:, 0])) < 1e-10
    assert np.max(np.abs(leaf[:, 0] - (2.0 / 7.0) * ys[:, 0] ** 2)) < 1e-6


def test_unstable_foliation_roles_swapped():
    _, mod, bump = coupled_saddle()
    dom = lp.ProductDomain(Box.cube(0.026, 2), 13, SPLIT.swapped_inverse())
    fol = lp.unstable_foliation(mod, SPLIT, domain=dom, eta=bump.eta,
                                nonlinearity_radius=0.066)
    assert fol.splitting.minus_idx == (1,)
    inv = dynamics.inverse_model(mod)
    assert lp.verify_lp_equivalence(inv, fol, seed=5) < 1e-2
    assert fol.b1_residual < 1e-12


def test_dq0_holder_estimate_smooth_case():
    _, mod, bump = coupled_saddle()
    params = lp.LPParameters.auto(SPLIT, bump.eta)
    dom = lp.ProductDomain(Box.cube(0.026, 2), 13, SPLIT)
    fol = lp.stable_foliation(mod, SPLIT, params, dom, eta=bump.eta)
    exponent, flagged = fol.fitted_dq0_exponent()
    assert exponent >= 0.5 - 0.1   # guaranteed lower bound for this gap
    # linear map: derivative family is constant, flag + exponent 1
    lin = linear_saddle()
    fol_lin = lp.stable_foliation(lin, SPLIT,
                                  lp.LPParameters.auto(SPLIT), dom)
    exponent, flagged = fol_lin.fitted_dq0_exponent()
    assert flagged and exponent == 1.0


def test_eta_too_large_certified():
    _, mod, bump = coupled_saddle()
    params = lp.LPParameters(0.51, 1.99, require_certified=True)
    dom = small_domain()
    with pytest.raises(EtaTooLarge):
        lp.solve_fiber_contraction(mod, SPLIT, params, dom, eta=0.9)


def test_tail_too_short():
    _, mod, bump = coupled_saddle()
    params = lp.LPParameters.auto(SPLIT, bump.eta, n_seq=4, k_tail=4,
                                  tol=1e-9)
    dom = small_domain()
    with pytest.raises(TailTooShort):
        lp.solve_fiber_contraction(mod, SPLIT, params, dom, eta=bump.eta)


def test_parameters_validation():
    with pytest.raises(ValueError):
        lp.LPParameters(0.4, 1.5).validate(SPLIT)   # gamma1 below ls+
    with pytest.raises(ValueError):
        lp.LPParameters(0.9, 1.5).validate(SPLIT, eta=0.0)  # growth clash
    lp.LPParameters.auto(SPLIT, 0.05).validate(SPLIT, 0.05)


def test_convergence_log_geometric():
    _, mod, bump = coupled_saddle()
    params = lp.LPParameters.auto(SPLIT, bump.eta, tol=1e-11)
    dom = small_domain(res=11)
    sol = lp.solve_fiber_contraction(mod, SPLIT, params, dom, eta=bump.eta)
    rows = [r for r in sol.log.rows if max(r[1], r[2]) > 1e-13][1:]
    deltas = np.log([max(r[1], r[2]) for r in rows])
    its = np.arange(len(deltas), dtype=float)
    slope, intercept = np.polyfit(its, deltas, 1)
    pred = slope * its + intercept
    r2 = 1 - np.sum((deltas - pred) ** 2) / np.sum(
        (deltas - deltas.mean()) ** 2)
    assert slope < 0 and r2 > 0.9
