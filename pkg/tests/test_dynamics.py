import numpy as np
import pytest
from scipy.integrate import quad

from smoothlin import dynamics
from smoothlin.errors import (EtaNotAchievable, LeftDomain, OriginUndefined,
                              OutsideBox)
from smoothlin.grids import Box, GridFunction, grid_sample


def planar_contraction():
    return dynamics.MapModel.from_polynomial(
        2, [(0.2, (1, 0), 0), (1.0, (0, 2), 0), (0.5, (0, 1), 1)],
        box=Box.cube(0.5, 2))


# -- grid functions --------------------------------------------------------------


def test_multilinear_exact_on_affine():
    box = Box.cube(1.0, 2)
    g = grid_sample(lambda p: (1.5 + 2 * p[:, 0] - p[:, 1])[:, None],
                    box, 9)
    rng = np.random.default_rng(0)
    pts = box.sample(200, rng)
    expect = 1.5 + 2 * pts[:, 0] - pts[:, 1]
    assert np.max(np.abs(g.eval(pts)[:, 0] - expect)) < 1e-14


def test_multilinear_square_error_bound():
    box = Box(np.array([-1.0]), np.array([1.0]))
    g = grid_sample(lambda p: p ** 2, box, 65)
    xs = np.linspace(-1, 1, 4001)[:, None]
    err = np.max(np.abs(g.eval(xs) - xs ** 2))
    h = 2.0 / 64
    # standard bound h^2/8 * max|f''| with f'' = 2
    assert err <= h ** 2 / 4 + 1e-14
    assert err > h ** 2 / 8   # attained at cell midpoints


def test_cubic_exact_on_cubics():
    box = Box.cube(1.0, 1)
    g = grid_sample(lambda p: (p[:, 0] ** 3 - 2 * p[:, 0] ** 2)[:, None],
                    box, 9, order=3)
    xs = np.linspace(-0.99, 0.99, 500)[:, None]
    expect = xs[:, 0] ** 3 - 2 * xs[:, 0] ** 2
    assert np.max(np.abs(g.eval(xs)[:, 0] - expect)) < 1e-13


def test_polynomial_extrapolation():
    box = Box.cube(1.0, 1)
    g = grid_sample(lambda p: (p[:, 0] ** 2)[:, None], box, 9, order=3,
                    extrapolation="poly")
    xs = np.array([[1.7], [-2.3]])
    assert np.max(np.abs(g.eval(xs)[:, 0] - xs[:, 0] ** 2)) < 1e-12


def test_outside_box_raises():
    box = Box.cube(1.0, 1)
    g = grid_sample(lambda p: p, box, 5)
    with pytest.raises(OutsideBox):
        g.eval(np.array([[1.2]]))


def test_nodes_reproduced_exactly():
    box = Box.cube(0.5, 2)
    g = grid_sample(lambda p: np.sin(p), box, 7)
    pts = g.node_points()
    assert np.max(np.abs(g.eval(pts) - g.node_values())) < 1e-13


def test_grid_derivative_second_order():
    box = Box.cube(1.0, 2)
    fn = lambda p: (np.sin(p[:, 0]) * np.cos(p[:, 1]))[:, None]
    errs = []
    for res in (17, 33):
        g = grid_sample(fn, box, res, order=3)
        pts = Box.cube(0.5, 2).sample(100, np.random.default_rng(1))
        dg = g.derivative(pts)[:, 0, :]
        expect = np.stack([np.cos(pts[:, 0]) * np.cos(pts[:, 1]),
                           -np.sin(pts[:, 0]) * np.sin(pts[:, 1])], axis=1)
        errs.append(np.max(np.abs(dg - expect)))
    assert errs[1] < errs[0] / 3


def test_table_round_trip():
    box = Box.cube(0.5, 2)
    g = grid_sample(lambda p: np.stack([p[:, 0] * p[:, 1], p[:, 0]], axis=1),
                    box, 5)
    table = g.to_table()
    back = GridFunction.from_table(table, 2, g.grid_shape, g.out_shape)
    assert np.allclose(back.values, g.values)
    assert np.allclose(back.box.lo, box.lo)


# -- polynomial map models --------------------------------------------------------


def test_polynomial_jacobian_matches_fd():
    model = dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (1.0, (1, 1), 0), (2.0, (0, 1), 1),
            (0.3, (2, 0), 1)], box=Box.cube(0.5, 2))
    rng = np.random.default_rng(2)
    pts = Box.cube(0.3, 2).sample(50, rng)
    jfd = dynamics._fd_jacobian(model.f, pts, 1e-6)
    assert np.max(np.abs(model.df(pts) - jfd)) < 1e-8


def test_constant_terms_rejected():
    with pytest.raises(ValueError):
        dynamics.PolynomialMap(2, [(1.0, (0, 0), 0)])


def test_linear_part_extraction():
    model = planar_contraction()
    assert np.allclose(model.linear, np.diag([0.2, 0.5]))


def test_fixed_point_validation():
    def shifted(pts):
        return pts + 0.1

    with pytest.raises(ValueError):
        dynamics.MapModel(2, shifted, box=Box.cube(1.0, 2))


def test_lipschitz_estimate():
    model = planar_contraction()
    lip = model.estimate_lipschitz_df()
    assert 1.0 < lip < 3.0   # DF varies through the quadratic term only


# -- iteration ---------------------------------------------------------------------


def test_iterate_identity_at_zero_steps():
    model = planar_contraction()
    x = np.array([0.01, 0.02])
    assert np.allclose(dynamics.iterate(model, x, 0), x)
    assert np.allclose(dynamics.iterate_derivative(model, x, 0), np.eye(2))


def test_iterate_linear_exact_power():
    model = dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (2.0, (0, 1), 1)], box=Box.cube(10.0, 2))
    x = np.array([0.3, 0.001])
    for k in (1, 3, 6):
        assert np.allclose(dynamics.iterate(model, x, k),
                           np.diag([0.5 ** k, 2.0 ** k]) @ x)
        assert np.allclose(dynamics.iterate_derivative(model, x, k),
                           np.diag([0.5 ** k, 2.0 ** k]))


def test_iterate_hand_example():
    model = planar_contraction()
    got = dynamics.iterate(model, np.array([0.0, 0.1]), 2)
    assert np.allclose(got, [0.0045, 0.025], atol=1e-15)


def test_iterate_semigroup():
    model = planar_contraction()
    rng = np.random.default_rng(3)
    pts = Box.cube(0.2, 2).sample(40, rng)
    a = dynamics.iterate(model, pts, 5)
    b = dynamics.iterate(model, dynamics.iterate(model, pts, 2), 3)
    assert np.allclose(a, b, atol=1e-15)


def test_iterate_derivative_matches_fd():
    model = planar_contraction()
    x = np.array([0.05, -0.07])
    jac = dynamics.iterate_derivative(model, x, 4)
    h = 1e-6
    fd = np.zeros((2, 2))
    for a in range(2):
        ep = x.copy()
        em = x.copy()
        ep[a] += h
        em[a] -= h
        fd[:, a] = (dynamics.iterate(model, ep, 4)
                    - dynamics.iterate(model, em, 4)) / (2 * h)
    assert np.max(np.abs(jac - fd)) / max(np.max(np.abs(fd)), 1) < 1e-5


def test_left_domain():
    model = dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (2.0, (0, 1), 1)], box=Box.cube(0.1, 2))
    with pytest.raises(LeftDomain) as info:
        dynamics.iterate(model, np.array([0.0, 0.09]), 5)
    assert info.value.step is not None


# -- cutoff modification ------------------------------------------------------------


def test_bump_linear_map_untouched():
    model = dynamics.MapModel.from_polynomial(
        2, [(0.5, (1, 0), 0), (2.0, (0, 1), 1)], box=Box.cube(1.0, 2))
    mod, info = dynamics.bump_modify(model, 0.1, 0.3)
    assert info.eta == 0.0
    rng = np.random.default_rng(1)
    pts = Box.cube(0.5, 2).sample(100, rng)
    assert np.allclose(mod.f(pts), model.f(pts))


def test_bump_identity_inside_linear_outside():
    model = planar_contraction()
    mod, info = dynamics.bump_modify(model, 0.01, 0.05)
    rng = np.random.default_rng(4)
    inner = rng.standard_normal((100, 2))
    inner = inner / np.linalg.norm(inner, axis=1, keepdims=True) \
        * rng.uniform(0, 0.0099, (100, 1))
    assert np.allclose(mod.f(inner), model.f(inner), atol=1e-16)
    outer = rng.standard_normal((100, 2))
    outer = outer / np.linalg.norm(outer, axis=1, keepdims=True) \
        * rng.uniform(0.051, 2.0, (100, 1))
    assert np.allclose(mod.f(outer), outer @ model.linear.T, atol=1e-16)


def test_bump_eta_bound_on_fresh_samples():
    model = planar_contraction()
    mod, info = dynamics.bump_modify(model, 0.01, 0.05)
    rng = np.random.default_rng(99)   # different seed than the estimator
    pts = rng.standard_normal((10000, 2))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) \
        * (0.05 * rng.random((10000, 1)) ** 0.5)
    devs = np.linalg.norm(mod.df(pts) - model.linear, ord=2, axis=(1, 2))
    assert np.max(devs) <= info.eta * 1.05
    assert info.eta <= 0.2


def test_bump_eta_target_error():
    model = planar_contraction()
    with pytest.raises(EtaNotAchievable) as info:
        dynamics.bump_modify(model, 0.2, 0.4, eta_target=1e-4)
    assert info.value.achieved > 1e-4


def test_bump_derivative_matches_fd():
    model = planar_contraction()
    mod, _ = dynamics.bump_modify(model, 0.01, 0.05)
    rng = np.random.default_rng(5)
    pts = Box.cube(0.06, 2).sample(200, rng)
    fd = dynamics._fd_jacobian(mod.f, pts, 1e-6)
    # the cutoff ramp has large third derivatives, so FD is only a sanity
    assert np.max(np.abs(mod.df(pts) - fd)) < 5e-5


# -- smooth kernel and sector step ---------------------------------------------------


def test_sector_step_plateaus():
    assert dynamics.sector_step(1.0, 0.5) == 1.0
    assert dynamics.sector_step(-0.1, 0.5) == 0.0
    assert dynamics.sector_step(0.5, 0.5) == 1.0
    assert dynamics.sector_step(0.3, 0.0) == 1.0
    assert dynamics.sector_step(-0.3, 0.0) == 0.0


def test_sector_step_interior_quadrature():
    val = dynamics.sector_step(0.25, 0.5)
    mass = quad(dynamics.bump_kernel, 0.0, 1.0, epsabs=1e-14)[0]
    oracle = quad(dynamics.bump_kernel, 0.0, 0.5, epsabs=1e-14)[0] / mass
    assert val == pytest.approx(oracle, abs=1e-12)
    assert val == pytest.approx(0.5, abs=1e-12)   # kernel symmetry
    assert 0.0 < val < 1.0


def test_sector_step_origin_undefined():
    with pytest.raises(OriginUndefined):
        dynamics.sector_step(0.0, 0.0)


def test_sector_step_monotone_and_homogeneous():
    xs = np.linspace(-0.2, 0.8, 60)
    vals = [dynamics.sector_step(x, 0.5) for x in xs]
    assert np.all(np.diff(vals) >= -1e-15)
    for t in (0.5, 2.0, 7.3):
        assert dynamics.sector_step(0.3 * t, 0.5 * t) \
            == pytest.approx(dynamics.sector_step(0.3, 0.5), abs=1e-12)


def test_sector_step_scaled_derivatives_bounded():
    # |x|^r * |D^r u| stays bounded on an annulus (no constant pinned)
    h = 1e-5
    worst1 = worst2 = 0.0
    for radius in (0.5, 1.0, 2.0):
        for angle in np.linspace(0.1, 1.4, 25):
            x1, x2 = radius * np.cos(angle), radius * np.sin(angle)
            up = dynamics.sector_step(x1 + h, x2)
            um = dynamics.sector_step(x1 - h, x2)
            u0 = dynamics.sector_step(x1, x2)
            d1 = (up - um) / (2 * h)
            d2 = (up - 2 * u0 + um) / h ** 2
            worst1 = max(worst1, radius * abs(d1))
            worst2 = max(worst2, radius ** 2 * abs(d2))
    assert worst1 < 20.0 and worst2 < 200.0


def test_smooth_step_table_matches_quadrature():
    for s in (0.1, 0.37, 0.62, 0.95):
        assert dynamics.smooth_step(s) \
            == pytest.approx(dynamics.smooth_step_quad(s), abs=1e-8)


# -- newton inversion ----------------------------------------------------------------


def test_inverse_model_roundtrip():
    model = planar_contraction()
    mod, _ = dynamics.bump_modify(model, 0.05, 0.2)
    inv = dynamics.inverse_model(mod)
    rng = np.random.default_rng(6)
    pts = Box.cube(0.3, 2).sample(200, rng)
    assert np.max(np.abs(mod.f(inv.f(pts)) - pts)) < 1e-10
    jac = inv.df(pts)
    # exact inverse-function identity: DF(G(y)) DG(y) = I
    prod = np.einsum("nij,njk->nik", mod.df(inv.f(pts)), jac)
    assert np.max(np.abs(prod - np.eye(2))) < 1e-9
    # FD sanity only: Newton noise and ramp curvature both pollute it
    fd = dynamics._fd_jacobian(inv.f, pts, 1e-5)
    assert np.max(np.abs(jac - fd)) < 1e-3
