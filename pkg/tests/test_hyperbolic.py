import numpy as np
import pytest

from smoothlin import dynamics, hyperbolic as hyp
from smoothlin.errors import ConditionViolated
from smoothlin.grids import Box
from smoothlin.lp_foliation import BlockSplitting

SPLIT = BlockSplitting.from_linear(np.diag([0.5, 2.0]), 1)

FAST = hyp.HyperbolicParams(lp_resolution=15, manifold_resolution=17)


def coupled_saddle():
    return dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (1.0, (1, 1), 0), (2.0, (0, 1), 1)],
        box=Box.cube(0.3, 2), name="coupled")


def quad_saddle():
    return dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (1.0, (0, 2), 0), (2.0, (0, 1), 1)],
        box=Box.cube(0.3, 2), name="quad")


def linear_saddle():
    return dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (2.0, (0, 1), 1)], box=Box.cube(0.3, 2))


def product_oracle(pts):
    out = np.ones_like(pts[:, 1])
    y = pts[:, 1]
    for j in range(80):
        out = out / (1.0 + y * 0.5 ** j)
        if np.max(np.abs(y * 0.5 ** j)) < 1e-16:
            break
    return np.stack([pts[:, 0] * out, pts[:, 1]], axis=1)


@pytest.fixture(scope="module")
def coupled_result():
    return hyp.linearize_hyperbolic(coupled_saddle(), FAST)


# -- manifolds -------------------------------------------------------------------


def test_manifolds_zero_for_decoupled_map():
    pair = hyp.stable_unstable_manifolds(linear_saddle(), SPLIT, 0.05,
                                         resolution=9)
    assert pair.g_s.max_abs() < 1e-13
    assert pair.g_u.max_abs() < 1e-13


def test_unstable_graph_oracle():
    # invariance g(2 y) = 0.5 g(y) + y^2 gives g(y) = (2/7) y^2
    pair = hyp.stable_unstable_manifolds(quad_saddle(), SPLIT, 0.06,
                                         resolution=33)
    ys = np.linspace(-0.05, 0.05, 41)[:, None]
    expect = (2.0 / 7.0) * ys[:, 0] ** 2
    got = pair.g_u.eval(ys)[:, 0]
    h = 2 * 0.06 / 32
    assert np.max(np.abs(got - expect)) < h ** 4 + 1e-12
    assert pair.u_residual < 1e-10
    v0, dv0, u0, du0 = pair.origin_flatness()
    assert max(v0, dv0, u0, du0) < 1e-10


def test_straighten_manifolds_fixes_axes():
    model = quad_saddle()
    theta1, theta2, straight, pair = hyp.straighten_manifolds(
        model, SPLIT, 0.06, resolution=33)
    assert hyp.axis_invariance_residual(straight, SPLIT, 0.03) < 1e-9
    rng = np.random.default_rng(0)
    pts = Box.cube(0.05, 2).sample(100, rng)
    for theta in (theta1, theta2):
        assert np.max(np.abs(theta.inverse(theta.forward(pts)) - pts)) \
            < 1e-15


# -- decoupling ------------------------------------------------------------------


def test_decouple_identity_for_linear_map():
    from smoothlin.lp_foliation import (LPParameters, ProductDomain,
                                        stable_foliation,
                                        unstable_foliation)
    model = linear_saddle()
    mod, bump = dynamics.bump_modify(model, 0.05, 0.15)
    params = LPParameters.auto(SPLIT, bump.eta)
    omega = ProductDomain(Box.cube(0.03, 2), 9, SPLIT)
    st = stable_foliation(mod, SPLIT, params, omega, eta=bump.eta)
    omega_u = ProductDomain(Box.cube(0.03, 2), 9, SPLIT.swapped_inverse())
    un = unstable_foliation(mod, SPLIT, domain=omega_u, eta=bump.eta,
                            nonlinearity_radius=0.15)
    dec = hyp.decouple(model, SPLIT, st, un, Box.cube(0.01, 2),
                       factor_box_radius=0.05)
    rng = np.random.default_rng(1)
    pts = Box.cube(0.01, 2).sample(100, rng)
    assert np.max(np.abs(dec.psi.forward(pts) - pts)) < 1e-12
    assert dec.identity_residual < 1e-12
    assert dec.dpsi_origin_residual < 1e-9


def test_decouple_coupled_saddle(coupled_result):
    res = coupled_result
    dec = res.decoupling
    assert dec.identity_residual < 1e-4
    assert dec.dpsi_origin_residual < 1e-8
    # factor maps of the straightened coupled saddle are the axis maps
    xs = np.linspace(-0.01, 0.01, 11)[:, None]
    assert np.allclose(dec.f_minus.f(xs), 0.5 * xs, atol=1e-12)
    assert np.allclose(dec.f_plus.f(xs), 2.0 * xs, atol=1e-12)


# -- full pipeline ----------------------------------------------------------------


def test_pipeline_linear_map_identity():
    res = hyp.linearize_hyperbolic(linear_saddle(), FAST)
    rng = np.random.default_rng(2)
    pts = Box.cube(0.01, 2).sample(200, rng)
    assert np.max(np.abs(res.chain.forward(pts) - pts)) < 1e-10
    assert res.report["conjugacy_residual"] < 1e-10


def test_pipeline_coupled_oracle(coupled_result):
    res = coupled_result
    assert res.report["mode"] == "hyperbolic"
    assert res.report["conjugacy_residual"] < 1e-4
    assert res.report["decoupling_residual"] < 1e-4
    rng = np.random.default_rng(3)
    pts = Box.cube(0.01, 2).sample(400, rng)
    phi = res.chain.forward(pts)
    assert np.max(np.abs(phi - product_oracle(pts))) < 1e-4
    back = res.chain.inverse(phi)
    assert np.max(np.abs(back - pts)) < 1e-10


def test_pipeline_dispatch_pure_contraction():
    model = dynamics.MapModel.from_polynomial(
        2, [(0.2, (1, 0), 0), (1.0, (0, 2), 0), (0.5, (0, 1), 1)],
        box=Box.cube(0.3, 2))
    params = hyp.HyperbolicParams()
    params.cascade.working_radius = 0.02
    res = hyp.linearize_hyperbolic(model, params)
    assert res.report["mode"] == "contraction"
    rng = np.random.default_rng(4)
    pts = Box.cube(0.02, 2).sample(200, rng)
    phi = res.chain.forward(pts)
    oracle = np.stack([pts[:, 0] - 20 * pts[:, 1] ** 2, pts[:, 1]], axis=1)
    assert np.max(np.abs(phi - oracle)) < 1e-9


def test_pipeline_dispatch_pure_expansion():
    model = dynamics.MapModel.from_polynomial(
        2, [(2.0, (1, 0), 0), (1.0, (0, 2), 0), (5.0, (0, 1), 1)],
        box=Box.cube(0.5, 2), name="expansion")
    params = hyp.HyperbolicParams()
    params.cascade.working_radius = 0.02
    params.cascade.resolution = 33
    res = hyp.linearize_hyperbolic(model, params)
    assert res.report["mode"] == "expansion"
    # the cascade chain of the inverse conjugates the map itself
    rng = np.random.default_rng(5)
    pts = Box.cube(0.005, 2).sample(200, rng)
    lhs = res.chain.forward(model.f(pts))
    rhs = res.chain.forward(pts) @ model.linear.T
    assert np.max(np.linalg.norm(lhs - rhs, axis=1)) < 1e-8


def test_pipeline_condition_failure():
    # gap: 1.05 / 0.9 = 1.167 < max(10, 1/0.9) fails badly
    model = dynamics.MapModel.from_polynomial(
        3, [(0.9, (1, 0, 0), 0), (1.0, (0, 1, 1), 0),
            (1.05, (0, 1, 0), 1), (10.0, (0, 0, 1), 2)],
        box=Box.cube(0.3, 3))
    with pytest.raises(ConditionViolated):
        hyp.linearize_hyperbolic(model, FAST)


def test_pipeline_residual_decreases_under_refinement():
    model = coupled_saddle()
    residuals = []
    for res_lp in (9, 21):
        params = hyp.HyperbolicParams(lp_resolution=res_lp,
                                      manifold_resolution=17)
        out = hyp.linearize_hyperbolic(model, params)
        residuals.append(out.report["conjugacy_residual"])
    assert residuals[1] < residuals[0]


def test_forward_and_inverse_chains_commute_with_linear_part():
    # linearizing F and F^{-1} gives chains whose mismatch commutes with
    # the linear part up to the combined residuals
    model = coupled_saddle()
    res_f = hyp.linearize_hyperbolic(model, FAST)
    # write the inverse with the contracting coordinate first so both
    # runs share the block order
    inv = dynamics.inverse_model(model, box=model.box)
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])

    def f_sw(pts):
        return inv.f(np.atleast_2d(pts) @ swap.T) @ swap.T

    def df_sw(pts):
        inner = inv.df(np.atleast_2d(pts) @ swap.T)
        return np.einsum("ij,njk,kl->nil", swap, inner, swap)

    inv_model = dynamics.MapModel(2, f_sw, df_sw, swap @ inv.linear @ swap,
                                  box=Box.cube(0.1, 2), name="coupled-inv")
    res_b = hyp.linearize_hyperbolic(inv_model, FAST)
    rng = np.random.default_rng(6)
    pts = Box.cube(0.005, 2).sample(100, rng)

    def chain_b_on_original(x):
        # undo the coordinate swap around the second chain
        return res_b.chain.inverse(np.atleast_2d(x) @ swap.T) @ swap.T

    # swap o chain_b o swap conjugates the forward map to the same
    # linear part, so the mismatch of the two conjugators commutes with it
    lam = model.linear
    mix_lam = res_f.chain.forward(chain_b_on_original(pts @ lam.T))
    lam_mix = res_f.chain.forward(chain_b_on_original(pts)) @ lam.T
    combined = (res_f.report["conjugacy_residual"]
                + res_b.report["conjugacy_residual"])
    assert np.max(np.linalg.norm(mix_lam - lam_mix, axis=1)) \
        < 50 * combined + 1e-8


def test_derivative_exponent_above_guarantee(coupled_result):
    from smoothlin.exponents import beta_overall
    from smoothlin.spectral import cluster_eigenvalues
    from smoothlin.verify import derivative_exponent
    dec = cluster_eigenvalues([0.5, 2.0], 0.2)
    beta = beta_overall(dec, 1e-3).beta_overall
    est = derivative_exponent(coupled_result.chain, 0.01, seed=7)
    assert est.exponent >= beta - 0.1


def test_pipeline_auto_aligns_rotated_frame():
    theta = 0.5
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    base = coupled_saddle()

    def f(p):
        return base.f(np.atleast_2d(p) @ rot.T) @ rot

    def df(p):
        inner = base.df(np.atleast_2d(p) @ rot.T)
        return np.einsum("ij,njk,kl->nil", rot.T, inner, rot)

    rotated = dynamics.MapModel(2, f, df, rot.T @ base.linear @ rot,
                                box=Box.cube(0.3, 2), name="rotated-saddle")
    out = hyp.linearize_hyperbolic(rotated, FAST)
    assert out.chain.transforms[0].label == "band-alignment"
    assert out.report["conjugacy_residual"] < 1e-4


def test_pipeline_quadratic_saddle_straightens_exactly():
    # the quadratic coupling is exhausted by the manifold straightening:
    # conjugating away g_u(y) = (2/7) y^2 leaves an exactly linear map,
    # so the pipeline reaches round-off
    model = quad_saddle()
    res = hyp.linearize_hyperbolic(
        model, hyp.HyperbolicParams(lp_resolution=15,
                                    manifold_resolution=21))
    assert res.report["conjugacy_residual"] < 1e-12
    assert res.report["axis_residual"] < 1e-12
