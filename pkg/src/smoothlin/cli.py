"""Batch front end.

    smoothlin analyze|foliate|linearize|verify|sharpness \
        --config cfg.ini --out outdir [--seed N] [--chain dir]

Exit codes: 0 success, 2 the spectral conditions fail, 3 a numerical
solver failed, 4 the configuration is invalid.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import chain_io, report as rep
from .config import build_family, load_config
from .contraction import CascadeParams
from .dynamics import bump_modify
from .errors import (ConditionViolated, ConfigError, EmptySpectrum,
                     NonHyperbolic, NonpositiveExponent, NonpositiveResult,
                     NotMixed, SmoothlinError)
from .exponents import beta_overall
from .grids import Box
from .hyperbolic import HyperbolicParams, linearize_hyperbolic
from .lp_foliation import (BlockSplitting, LPParameters, ProductDomain,
                           stable_foliation, verify_lp_equivalence)
from .spectral import (Margins, check_all_conditions, cluster_eigenvalues,
                       decomposition_from_bands)
from .verify import conjugacy_residual, derivative_exponent, diffeo_check, \
    sharpness_experiment

EXIT_OK = 0
EXIT_CONDITIONS = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


def _decomposition(cfg):
    if cfg.spectrum_bands:
        return decomposition_from_bands(cfg.spectrum_bands)
    if cfg.spectrum_moduli:
        return cluster_eigenvalues(cfg.spectrum_moduli, cfg.gap_threshold)
    if cfg.map_spec is not None:
        model = cfg.build_map()
        return cluster_eigenvalues(np.abs(np.linalg.eigvals(model.linear)),
                                   cfg.gap_threshold)
    raise ConfigError("need a [spectrum] or [map] section")


def _analyze_report(cfg, out_dir):
    dec = _decomposition(cfg)
    margins = Margins.default(dec, cfg.delta)
    checks = check_all_conditions(dec, margins)
    r = rep.Report()
    r.section("spectrum")
    r.add("seed", cfg.seed)
    r.add("m", dec.m)
    r.add("d", dec.d)
    r.add("delta", margins.delta)
    for i, band in enumerate(dec.bands):
        r.add(f"band{i + 1}", (band.lambda_minus, band.lambda_plus))
    r.section("conditions")
    r.add("band_condition", checks["band_condition"])
    for row in checks["band_rows"]:
        r.add(f"band{row.band_index + 1}_ratio", row.ratio)
        r.add(f"band{row.band_index + 1}_bound", row.bound)
        r.add(f"band{row.band_index + 1}_slack", row.slack)
    if checks["mixed"]:
        r.add("gap_condition", checks["gap_condition"])
        r.add("gap_lhs", checks["gap_report"]["lhs"])
        r.add("gap_rhs", checks["gap_report"]["rhs"])
        r.add("gap_slack", checks["gap_report"]["slack"])
        r.add("rs_condition", checks["rs_condition"])
        r.add("foliation_condition", checks["foliation_condition"])
        r.add("dual_foliation_condition", checks["dual_foliation_condition"])
    r.add("overall", checks["overall"])
    if checks["overall"]:
        r.section("exponents")
        r.add("epsilon", cfg.epsilon)
        try:
            expo = beta_overall(dec, cfg.epsilon)
        except (NonpositiveExponent, NonpositiveResult) as exc:
            # the conditions hold, but the chosen epsilon eats the slack
            r.add("beta_overall_defined", False)
            r.add("beta_overall_note", str(exc))
            expo = None
        if expo is not None:
            r.add("beta_overall_defined", True)
            r.add("beta_overall", expo.beta_overall)
            if expo.beta_s is not None:
                r.add("beta_s", expo.beta_s)
                r.add("beta_u", expo.beta_u)
            if expo.beta_sequence_contraction:
                r.add("beta_contraction", expo.beta_sequence_contraction)
                r.add("zeta_contraction", expo.zeta_sequence_contraction)
            if expo.beta_sequence_expansion:
                r.add("beta_expansion", expo.beta_sequence_expansion)
                r.add("zeta_expansion", expo.zeta_sequence_expansion)
    r.write(os.path.join(out_dir, "report.txt"))
    rows = [(i + 1, b.lambda_minus, b.lambda_plus, b.ratio)
            for i, b in enumerate(dec.bands)]
    rep.write_csv(os.path.join(out_dir, "bands.csv"),
                  ["band", "lambda_minus", "lambda_plus", "ratio"], rows)
    if cfg.plots:
        rep.plot_band_structure(dec, os.path.join(out_dir, "bands.png"))
    return EXIT_OK if checks["overall"] else EXIT_CONDITIONS


def cmd_analyze(cfg, out_dir, chain_dir=None):
    return _analyze_report(cfg, out_dir)


def _hyperbolic_params(cfg):
    lp_params = None
    if cfg.gamma1 is not None:
        lp_params = LPParameters(cfg.gamma1, cfg.gamma2, n_seq=cfg.n_seq,
                                 k_tail=cfg.k_tail, tol=cfg.lp_tol)
    cascade = CascadeParams(resolution=cfg.cascade_resolution,
                            working_radius=cfg.working_radius,
                            tol=cfg.cascade_tol, kmax=cfg.kmax,
                            graph_degree=cfg.graph_degree,
                            delta=cfg.delta,
                            gap_threshold=cfg.gap_threshold)
    return HyperbolicParams(r0=cfg.r0, r1=cfg.r1,
                            reporting_radius=cfg.reporting_radius,
                            lp_resolution=cfg.lp_resolution,
                            lp_params=lp_params, n_seq=cfg.n_seq,
                            k_tail=cfg.k_tail, lp_tol=cfg.lp_tol,
                            manifold_resolution=cfg.manifold_resolution,
                            cascade=cascade,
                            gap_threshold=cfg.gap_threshold,
                            delta=cfg.delta, eta_target=cfg.eta_target,
                            seed=cfg.seed)


def cmd_linearize(cfg, out_dir, chain_dir=None):
    model = cfg.build_map()
    dec = cluster_eigenvalues(np.abs(np.linalg.eigvals(model.linear)),
                              cfg.gap_threshold)
    checks = check_all_conditions(dec, Margins.default(dec, cfg.delta))
    if not checks["overall"]:
        _analyze_report(cfg, out_dir)
        return EXIT_CONDITIONS
    params = _hyperbolic_params(cfg)
    result = linearize_hyperbolic(model, params)
    r = rep.Report()
    r.section("run")
    r.add("seed", cfg.seed)
    r.add("map", model.name)
    r.add("mode", result.report["mode"])
    r.section("conditions")
    for row in checks["band_rows"]:
        r.add(f"band{row.band_index + 1}_slack", row.slack)
    if checks["mixed"]:
        r.add("gap_slack", checks["gap_report"]["slack"])
    r.section("phases")
    for key, value in result.report.items():
        if key in ("conditions", "bands", "mode"):
            continue
        r.add(key, value)
    for tag, cascade in (("minus", result.cascade_minus),
                         ("plus", result.cascade_plus)):
        if cascade is None:
            continue
        for stage in cascade.stages:
            prefix = f"cascade_{tag}_stage{stage.ell}"
            r.add(prefix + "_eta", stage.eta)
            r.add(prefix + "_fitted_rate", stage.fitted_rate)
            r.add(prefix + "_fit_r2", stage.fit_r2)
            r.add(prefix + "_iterations", stage.limit_iterations)
            r.add(prefix + "_structure_residual", stage.structure_residual)
    r.section("exponents")
    expo = beta_overall(dec, cfg.epsilon)
    r.add("epsilon", cfg.epsilon)
    r.add("beta_overall", expo.beta_overall)
    radius = result.report.get("reporting_radius")
    if radius is None:
        radius = params.cascade.working_radius or 0.5 * model.box.radius
    box = Box.cube(radius, model.dimension)
    resid = conjugacy_residual(model, result.chain, model.linear, box,
                               seed=cfg.seed)
    r.section("verification")
    for key, value in resid.items():
        r.add("conjugacy_" + key, value)
    est = derivative_exponent(result.chain, radius, seed=cfg.seed)
    r.add("derivative_exponent", est.exponent)
    r.add("derivative_exponent_confidence", est.confidence)
    r.add("derivative_exponent_floor", expo.beta_overall - 0.1)
    r.write(os.path.join(out_dir, "report.txt"))
    chain_io.save_chain(result.chain, os.path.join(out_dir, "chain"))
    for tag, cascade in (("minus", result.cascade_minus),
                         ("plus", result.cascade_plus)):
        if cascade is None:
            continue
        for stage in cascade.stages:
            rows = [(k, d) for k, d in stage.decay]
            rep.write_csv(os.path.join(
                out_dir, f"decay_{tag}_stage{stage.ell}.csv"),
                ["k", "difference"], rows)
            if cfg.plots and rows:
                rep.plot_decay(stage.decay, stage.eta, os.path.join(
                    out_dir, f"decay_{tag}_stage{stage.ell}.png"))
    if result.stable_fol is not None:
        rows = result.stable_fol.solution.log.rows
        rep.write_csv(os.path.join(out_dir, "lp_convergence.csv"),
                      ["iteration", "dv", "dw", "ratio"], rows)
        if cfg.plots:
            rep.plot_convergence(rows,
                                 os.path.join(out_dir, "lp_convergence.png"))
    return EXIT_OK


def cmd_foliate(cfg, out_dir, chain_dir=None):
    model = cfg.build_map()
    evals = np.abs(np.linalg.eigvals(model.linear))
    n_minus = int(np.sum(evals < 1.0))
    if n_minus in (0, model.dimension):
        raise NotMixed("foliate needs a mixed spectrum")
    splitting = BlockSplitting.from_linear(model.linear, n_minus)
    mod, bump = bump_modify(model, cfg.r0, cfg.r1, eta_target=cfg.eta_target,
                            seed=cfg.seed)
    if cfg.gamma1 is not None:
        lp_params = LPParameters(cfg.gamma1, cfg.gamma2, n_seq=cfg.n_seq,
                                 k_tail=cfg.k_tail, tol=cfg.lp_tol)
    else:
        lp_params = LPParameters.auto(splitting, bump.eta, n_seq=cfg.n_seq,
                                      k_tail=cfg.k_tail, tol=cfg.lp_tol)
    radius = cfg.reporting_radius or 0.5 * cfg.r0
    omega = ProductDomain(Box.cube(1.2 * radius, model.dimension),
                          cfg.lp_resolution, splitting)
    fol = stable_foliation(mod, splitting, lp_params, omega, eta=bump.eta)
    equivalence = verify_lp_equivalence(mod, fol, seed=cfg.seed)
    from .lp_foliation import foliation_invariance_residual
    b4 = foliation_invariance_residual(mod, fol, seed=cfg.seed)
    r = rep.Report()
    r.section("run")
    r.add("seed", cfg.seed)
    r.add("map", model.name)
    r.add("bump_eta", bump.eta)
    r.add("gamma1", lp_params.gamma1)
    r.add("gamma2", lp_params.gamma2)
    r.section("foliation")
    r.add("iterations", len(fol.solution.log.rows))
    r.add("contraction_estimates", fol.solution.ctx.contraction_estimates())
    r.add("measured_contraction", fol.solution.log.tail_contraction())
    r.add("tail_bound", fol.solution.ctx.tail_bound())
    r.add("b1_residual", fol.b1_residual)
    r.add("b2_residual", fol.b2_residual)
    r.add("b4_residual", b4)
    r.add("lp_equivalence_residual", equivalence)
    r.add("derivative_consistency", fol.solution.deriv_residual)
    expo, flagged = fol.fitted_dq0_exponent()
    r.add("dq0_exponent", expo)
    r.add("dq0_exponent_flagged_constant", flagged)
    r.write(os.path.join(out_dir, "report.txt"))
    rep.write_grid_csv(os.path.join(out_dir, "q0.csv"), fol.q0)
    _write_leaf_graph_csv(os.path.join(out_dir, "hs.csv"), fol)
    rep.write_csv(os.path.join(out_dir, "lp_convergence.csv"),
                  ["iteration", "dv", "dw", "ratio"],
                  fol.solution.log.rows)
    if cfg.plots:
        rep.plot_convergence(fol.solution.log.rows,
                             os.path.join(out_dir, "lp_convergence.png"))
    return EXIT_OK


def _write_leaf_graph_csv(path, fol):
    """Leaf-graph values h(x, y) = transverse part of x + q0(x, y)."""
    pts = fol.q0.node_points()
    n = len(fol.splitting.minus_idx) + len(fol.splitting.plus_idx)
    xs, ys = pts[:, :n], pts[:, n:]
    h_vals = fol.h(xs, ys)
    header = [f"x{i + 1}" for i in range(n)] \
        + [f"y{i + 1}" for i in range(ys.shape[1])] \
        + [f"h{i + 1}" for i in range(h_vals.shape[1])]
    rep.write_csv(path, header, np.hstack([xs, ys, h_vals]))


def cmd_verify(cfg, out_dir, chain_dir=None):
    if chain_dir is None:
        raise ConfigError("verify needs --chain <exported chain directory>")
    model = cfg.build_map()
    chain = chain_io.load_chain(chain_dir)
    radius = cfg.reporting_radius or 0.5 * cfg.r0
    box = Box.cube(radius, model.dimension)
    resid = conjugacy_residual(model, chain, model.linear, box, seed=cfg.seed)
    diffeo = diffeo_check(chain, box, seed=cfg.seed)
    est = derivative_exponent(chain, radius, seed=cfg.seed)
    r = rep.Report()
    r.section("run")
    r.add("seed", cfg.seed)
    r.add("map", model.name)
    r.add("chain", os.path.basename(os.path.normpath(chain_dir)))
    r.section("verification")
    for key, value in resid.items():
        r.add("conjugacy_" + key, value)
    for key, value in diffeo.items():
        r.add("diffeo_" + key, value)
    r.add("derivative_exponent", est.exponent)
    r.add("derivative_exponent_confidence", est.confidence)
    r.write(os.path.join(out_dir, "report.txt"))
    return EXIT_OK


def cmd_sharpness(cfg, out_dir, chain_dir=None):
    family = build_family(cfg)
    params = _hyperbolic_params(cfg)
    rows = sharpness_experiment(family, params, epsilon=cfg.epsilon,
                                seed=cfg.seed)
    r = rep.Report()
    r.section("run")
    r.add("seed", cfg.seed)
    r.add("family", cfg.family)
    r.add("epsilon", cfg.epsilon)
    r.section("sweep")
    for row in rows:
        tag = f"parameter_{rep.fmt_value(row.parameter)}"
        if row.error is not None:
            r.add(tag + "_error", row.error)
            continue
        r.add(tag + "_predicted", row.predicted_beta)
        r.add(tag + "_measured", row.measured_exponent)
        r.add(tag + "_passed", row.passed)
    r.write(os.path.join(out_dir, "report.txt"))
    rep.write_csv(os.path.join(out_dir, "sweep.csv"),
                  ["parameter", "predicted_beta", "measured_exponent",
                   "confidence", "passed"],
                  [(x.parameter, x.predicted_beta, x.measured_exponent,
                    x.confidence, x.passed) for x in rows if x.error is None])
    if cfg.plots:
        rep.plot_sweep(rows, os.path.join(out_dir, "sweep.png"))
    ok = [row for row in rows if row.error is None]
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {
    "analyze": cmd_analyze,
    "foliate": cmd_foliate,
    "linearize": cmd_linearize,
    "verify": cmd_verify,
    "sharpness": cmd_sharpness,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="smoothlin",
        description="spectral conditions, Holder exponents and numerical "
                    "linearization of hyperbolic fixed points")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--chain", default=None,
                        help="exported chain directory (verify)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        os.makedirs(args.out, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args.out, args.chain)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonHyperbolic, NotMixed, ConditionViolated, EmptySpectrum) as exc:
        print(f"condition failure: {exc}", file=sys.stderr)
        return EXIT_CONDITIONS
    except SmoothlinError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
