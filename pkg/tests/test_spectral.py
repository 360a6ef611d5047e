import numpy as np
import pytest

from smoothlin import spectral
from smoothlin.errors import (EmptySpectrum, KTooSmall, NonHyperbolic,
                              NotMixed, TargetTooTight)


def bands_of(dec):
    return [(b.lambda_minus, b.lambda_plus) for b in dec.bands]


def test_cluster_isolated_moduli():
    dec = spectral.cluster_eigenvalues([0.2, 0.5, 2.0], 0.5)
    assert bands_of(dec) == [(0.2, 0.2), (0.5, 0.5), (2.0, 2.0)]
    assert dec.d == 2 and dec.m == 3


def test_cluster_rejects_unit_circle():
    with pytest.raises(NonHyperbolic):
        spectral.cluster_eigenvalues([1.0, 2.0], 0.5)
    with pytest.raises(NonHyperbolic):
        spectral.cluster_eigenvalues([0.5, 1.0 + 5e-10], 0.5)


def test_cluster_empty():
    with pytest.raises(EmptySpectrum):
        spectral.cluster_eigenvalues([], 0.5)


def test_cluster_never_merges_across_unit_circle():
    dec = spectral.cluster_eigenvalues([0.9, 1.1], gap_threshold=0.5)
    assert dec.m == 2 and dec.d == 1


def test_cluster_tight_interval_endpoints():
    # endpoint moduli of three adjacent interval bands: the ratio rule
    # splits at the large in-band ratios, not at the tiny gaps, giving
    # four clusters; the intended interval decomposition must be built
    # directly from the band list.
    d = 1e-3
    mods = [1 / 16 + d, 1 / 8, 1 / 8 + d, 1 / 4, 1 / 4 + d, 1 / 2]
    dec = spectral.cluster_eigenvalues(mods, 0.5)
    assert dec.m == 4
    direct = spectral.decomposition_from_bands(
        [(1 / 16 + d, 1 / 8), (1 / 8 + d, 1 / 4), (1 / 4 + d, 1 / 2)])
    assert direct.m == 3 and direct.d == 3


def test_band_condition_tight_three_bands():
    d = 1e-3
    dec = spectral.decomposition_from_bands(
        [(1 / 16 + d, 1 / 8), (1 / 8 + d, 1 / 4), (1 / 4 + d, 1 / 2)])
    ok, rows = spectral.check_band_condition(dec)
    assert ok
    assert all(r.ratio < 2.0 for r in rows)


def test_band_condition_wide_gap_mixed():
    dec = spectral.decomposition_from_bands(
        [(0.1, 1 / 6), (2.0, 3.0), (9.0, 10.0)])
    ok, rows = spectral.check_band_condition(dec)
    assert ok
    assert rows[0].bound == pytest.approx(6.0)
    assert rows[1].bound == pytest.approx(2.0)


def test_band_condition_single_band():
    dec = spectral.cluster_eigenvalues([0.5], 0.2)
    ok, _ = spectral.check_band_condition(dec)
    assert ok


def test_gap_condition():
    dec = spectral.decomposition_from_bands(
        [(0.1, 1 / 6), (2.0, 3.0), (9.0, 10.0)])
    ok, report = spectral.check_gap_condition(dec)
    assert ok and report["lhs"] == pytest.approx(12.0)
    dec2 = spectral.cluster_eigenvalues([0.5, 2.0], 0.2)
    assert spectral.check_gap_condition(dec2)[0]
    # near-unit pairs still satisfy the gap inequality (1.222 > 1.111);
    # a wide expansive band is what breaks it
    dec3 = spectral.cluster_eigenvalues([0.9, 1.1], 0.1)
    assert spectral.check_gap_condition(dec3)[0]
    dec4 = spectral.decomposition_from_bands([(0.9, 0.9), (1.05, 10.0)])
    assert not spectral.check_gap_condition(dec4)[0]


def test_gap_condition_needs_mixed():
    dec = spectral.cluster_eigenvalues([0.2, 0.5], 0.2)
    with pytest.raises(NotMixed):
        spectral.check_gap_condition(dec)


def test_rs_condition():
    wide = spectral.decomposition_from_bands(
        [(0.1, 1 / 6), (2.0, 3.0), (9.0, 10.0)])
    assert not spectral.check_rs_condition(wide)
    assert spectral.check_rs_condition(
        spectral.cluster_eigenvalues([0.5, 2.0], 0.2))
    assert spectral.check_rs_condition(
        spectral.decomposition_from_bands([(0.5, 0.6), (2.0, 2.0)]))


def test_foliation_condition():
    wide = spectral.decomposition_from_bands(
        [(0.1, 1 / 6), (2.0, 3.0), (9.0, 10.0)])
    assert spectral.check_foliation_condition(wide)
    assert spectral.check_foliation_condition(
        spectral.cluster_eigenvalues([0.5, 2.0], 0.2))
    bad = spectral.decomposition_from_bands([(0.9, 0.9), (1.05, 10.0)])
    assert not spectral.check_foliation_condition(bad)


def test_rs_implies_gap_and_band():
    rng = np.random.default_rng(42)
    hits = 0
    for _ in range(300):
        ls_minus = rng.uniform(0.05, 0.9)
        ls_plus = rng.uniform(ls_minus, 0.95)
        lu_minus = rng.uniform(1.05, 8.0)
        lu_plus = rng.uniform(lu_minus, 9.0)
        dec = spectral.decomposition_from_bands(
            [(ls_minus, ls_plus), (lu_minus, lu_plus)])
        if spectral.check_rs_condition(dec):
            hits += 1
            assert spectral.check_gap_condition(dec)[0]
            assert spectral.check_band_condition(dec)[0]
    assert hits > 10


def test_cluster_idempotent_on_separated_spectra():
    rng = np.random.default_rng(7)
    for _ in range(50):
        m = rng.integers(1, 4)
        centers = np.sort(rng.uniform(0.05, 0.6, m))
        while np.any(np.diff(centers) / centers[:-1] < 0.5):
            centers = np.sort(rng.uniform(0.05, 0.6, m))
        mods = []
        for c in centers:
            mods.extend([c, c * 1.05])
        dec = spectral.cluster_eigenvalues(mods, 0.2)
        again = spectral.cluster_eigenvalues(dec.all_moduli(), 0.2)
        assert bands_of(again) == bands_of(dec)


def test_margins():
    dec = spectral.cluster_eigenvalues([0.5, 2.0], 0.2)
    mg = spectral.Margins.default(dec)
    assert mg.mu_plus[0] > 0.5 and mg.mu_minus[0] < 0.5
    ls_minus, ls_plus, lu_minus, lu_plus = mg.envelopes()
    assert ls_minus < 0.5 < ls_plus < 1 < lu_minus < 2 < lu_plus
    with pytest.raises(ValueError):
        spectral.Margins(dec, 0.5)   # would overlap the unit circle


def test_adapted_norm_diagonal():
    norm = spectral.adapted_norm(np.array([[0.5]]), 0.6, 4)
    x = np.array([[1.0]])
    assert float(norm.operator_ratio(x)) <= 0.6 + 1e-12


def test_adapted_norm_shear():
    block = np.array([[0.5, 100.0], [0.0, 0.5]])
    norm = spectral.adapted_norm(block, 0.6, 200)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1000, 2))
    ratios = norm.operator_ratio(x)
    assert np.max(ratios) <= 0.6 * (1 + 1e-12)


def test_adapted_norm_errors():
    with pytest.raises(TargetTooTight):
        spectral.adapted_norm(np.array([[0.5, 1.0], [0.0, 0.5]]), 0.4, 50)
    with pytest.raises(KTooSmall) as info:
        spectral.adapted_norm(np.array([[0.5, 100.0], [0.0, 0.5]]), 0.6, 2)
    assert info.value.required is not None and info.value.required > 2


def test_linear_part_block_diagonalization():
    rng = np.random.default_rng(3)
    lam = np.diag([0.2, 0.5, 2.0]) + np.triu(rng.standard_normal((3, 3)),
                                             1) * 0.3
    part = spectral.LinearPart.from_matrix(lam, 0.2)
    assert part.commutation_residual() < 1e-9
    total = sum(part.projection(i) for i in range(3))
    assert np.linalg.norm(total - np.eye(3)) < 1e-9
    rebuilt = part.basis @ part.block_diagonal() @ part.basis_inv
    assert np.linalg.norm(rebuilt - lam) < 1e-9
    for i, block in enumerate(part.blocks):
        mods = np.abs(np.linalg.eigvals(block))
        band = part.decomposition.bands[i]
        assert np.all(mods >= band.lambda_minus - 1e-9)
        assert np.all(mods <= band.lambda_plus + 1e-9)


def test_adapted_coordinates_two_sided():
    block = np.array([[0.5, 3.0], [0.0, 0.45]])
    t_mat, t_inv = spectral.adapted_coordinates(block, 0.55, 0.4)
    new = t_mat @ block @ t_inv
    assert np.linalg.norm(new, 2) <= 0.55 * (1 + 1e-9)
    assert np.linalg.norm(np.linalg.inv(new), 2) <= (1 + 1e-9) / 0.4


def test_complex_pair_realified():
    # rotation-scaling block: complex pair of modulus 0.5
    rot = 0.5 * np.array([[np.cos(1.0), -np.sin(1.0)],
                          [np.sin(1.0), np.cos(1.0)]])
    lam = np.zeros((3, 3))
    lam[:2, :2] = rot
    lam[2, 2] = 2.0
    part = spectral.LinearPart.from_matrix(lam, 0.2)
    assert part.decomposition.m == 2
    assert part.blocks[0].shape == (2, 2)
    assert part.minus_dim == 2 and part.plus_dim == 1
