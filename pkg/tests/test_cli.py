import filecmp
import os

import numpy as np
import pytest

from smoothlin import chain_io, cli


def write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return str(path)


ANALYZE_MIXED = """
[spectrum]
builtin = wide-gap-mixed

[conditions]
epsilon = 0.001

[run]
seed = 5
plots = off
"""

ANALYZE_TIGHT = """
[spectrum]
builtin = tight-three-bands

[conditions]
epsilon = 1e-9

[run]
plots = off
"""

ANALYZE_FIVE = """
[spectrum]
builtin = five-point-mixed

[run]
plots = off
"""

ANALYZE_FAIL = """
[spectrum]
bands = 0.9 0.9 ; 1.05 10

[run]
plots = off
"""

LINEARIZE_FAST = """
[map]
builtin = planar-hyperbolic

[lp]
resolution = 13

[cascade]
resolution = 21

[hyperbolic]
manifold_resolution = 13

[run]
seed = 2
plots = off
"""


def read_report(out_dir):
    with open(os.path.join(out_dir, "report.txt"), encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    out = {}
    for line in lines:
        if " = " in line:
            key, val = line.split(" = ", 1)
            out[key] = val
    return out


def test_analyze_wide_gap(tmp_path):
    cfg = write(tmp_path / "a.ini", ANALYZE_MIXED)
    out = tmp_path / "out"
    assert cli.main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep["band_condition"] == "true"
    assert rep["gap_condition"] == "true"
    assert rep["rs_condition"] == "false"
    assert rep["overall"] == "true"
    assert float(rep["beta_s"]) == pytest.approx(0.04353, abs=1e-4)


def test_analyze_tight_bands(tmp_path):
    cfg = write(tmp_path / "a.ini", ANALYZE_TIGHT)
    out = tmp_path / "out"
    assert cli.main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep["band_condition"] == "true"
    assert rep["m"] == "3" and rep["d"] == "3"
    assert rep["beta_overall_defined"] == "true"


def test_analyze_tight_bands_epsilon_too_large(tmp_path):
    cfg = write(tmp_path / "a.ini", ANALYZE_TIGHT.replace("1e-9", "1e-3"))
    out = tmp_path / "out"
    # conditions hold, so the run succeeds, but the exponent is flagged
    assert cli.main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep["band_condition"] == "true"
    assert rep["beta_overall_defined"] == "false"


def test_analyze_five_point(tmp_path):
    cfg = write(tmp_path / "a.ini", ANALYZE_FIVE)
    out = tmp_path / "out"
    assert cli.main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep["gap_condition"] == "true"


def test_analyze_condition_exit_code(tmp_path):
    cfg = write(tmp_path / "a.ini", ANALYZE_FAIL)
    out = tmp_path / "out"
    assert cli.main(["analyze", "--config", cfg, "--out", str(out)]) == 2
    rep = read_report(out)
    assert rep["overall"] == "false"


def test_config_error_exit_code(tmp_path):
    cfg = write(tmp_path / "bad.ini", "[map]\nbuiltin = nonsense\n")
    out = tmp_path / "out"
    assert cli.main(["analyze", "--config", cfg, "--out", str(out)]) == 4
    assert cli.main(["analyze", "--config", str(tmp_path / "nope.ini"),
                     "--out", str(out)]) == 4


def test_explicit_terms_config(tmp_path):
    cfg = write(tmp_path / "m.ini", """
[map]
dimension = 2
terms =
    0.2 : 1 0 : 1
    1.0 : 0 2 : 1
    0.5 : 0 1 : 2
box_radius = 0.3

[run]
plots = off
""")
    out = tmp_path / "out"
    assert cli.main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep["d"] == "2" and rep["m"] == "2"


def test_linearize_verify_roundtrip(tmp_path):
    cfg = write(tmp_path / "lin.ini", LINEARIZE_FAST)
    out = tmp_path / "out"
    assert cli.main(["linearize", "--config", cfg, "--out", str(out)]) == 0
    rep = read_report(out)
    assert float(rep["conjugacy_max"]) < 1e-3
    assert float(rep["derivative_exponent"]) \
        >= float(rep["derivative_exponent_floor"])
    chain_dir = os.path.join(out, "chain")
    assert os.path.exists(os.path.join(chain_dir, "manifest.json"))
    # the reloaded chain evaluates identically
    chain = chain_io.load_chain(chain_dir)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.005, 0.005, (50, 2))
    out2 = tmp_path / "verify"
    code = cli.main(["verify", "--config", cfg, "--out", str(out2),
                     "--chain", chain_dir])
    assert code == 0
    rep2 = read_report(out2)
    assert rep2["conjugacy_max"] == rep["conjugacy_max"]
    assert float(rep2["diffeo_roundtrip_max"]) < 1e-9
    assert chain.forward(pts).shape == (50, 2)


def test_linearize_condition_exit(tmp_path):
    cfg = write(tmp_path / "lin.ini", """
[map]
dimension = 3
terms =
    0.9 : 1 0 0 : 1
    1.0 : 0 1 1 : 1
    1.05 : 0 1 0 : 2
    10.0 : 0 0 1 : 3
box_radius = 0.3

[run]
plots = off
""")
    out = tmp_path / "out"
    assert cli.main(["linearize", "--config", cfg, "--out", str(out)]) == 2


def test_foliate(tmp_path):
    cfg = write(tmp_path / "f.ini", LINEARIZE_FAST)
    out = tmp_path / "out"
    assert cli.main(["foliate", "--config", cfg, "--out", str(out)]) == 0
    rep = read_report(out)
    assert float(rep["b1_residual"]) < 1e-12
    assert float(rep["lp_equivalence_residual"]) < 1e-4
    assert os.path.exists(os.path.join(out, "q0.csv"))
    assert os.path.exists(os.path.join(out, "lp_convergence.csv"))


def test_reports_byte_identical(tmp_path):
    cfg = write(tmp_path / "lin.ini", LINEARIZE_FAST)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli.main(["linearize", "--config", cfg, "--out",
                     str(out_a)]) == 0
    assert cli.main(["linearize", "--config", cfg, "--out",
                     str(out_b)]) == 0
    names = sorted(os.listdir(out_a))
    assert names == sorted(os.listdir(out_b))
    for name in names:
        pa = os.path.join(out_a, name)
        pb = os.path.join(out_b, name)
        if os.path.isdir(pa):
            inner = sorted(os.listdir(pa))
            assert inner == sorted(os.listdir(pb))
            for sub in inner:
                assert filecmp.cmp(os.path.join(pa, sub),
                                   os.path.join(pb, sub), shallow=False)
        else:
            assert filecmp.cmp(pa, pb, shallow=False)


def test_seed_changes_samples_not_validity(tmp_path):
    cfg = write(tmp_path / "lin.ini", LINEARIZE_FAST)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli.main(["linearize", "--config", cfg, "--out", str(out_a),
                     "--seed", "2"]) == 0
    assert cli.main(["linearize", "--config", cfg, "--out", str(out_b),
                     "--seed", "9"]) == 0
    ra = read_report(out_a)
    rb = read_report(out_b)
    assert ra["conjugacy_seed"] == "2" and rb["conjugacy_seed"] == "9"
    assert float(rb["conjugacy_max"]) < 1e-3
