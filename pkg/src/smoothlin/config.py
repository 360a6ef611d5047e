"""Flat key = value run configuration, with named builtin maps and spectra.

The format is INI sections parsed by configparser; polynomial maps are
listed term by term as "coefficient : multi-index : output-index" lines,
one per line, with 1-based output indices.  No expression parser.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError
from .dynamics import MapModel
from .grids import Box

BUILTIN_MAPS = {
    # planar contraction with a quadratic cross term
    "planar-contraction": (2, [(0.2, (1, 0), 0), (1.0, (0, 2), 0),
                               (0.5, (0, 1), 1)], 0.3),
    # planar saddle with a multiplicative coupling
    "planar-hyperbolic": (2, [(0.5, (1, 0), 0), (1.0, (1, 1), 0),
                              (2.0, (0, 1), 1)], 0.3),
    # planar saddle with a quadratic coupling (curved unstable manifold)
    "planar-hyperbolic-quad": (2, [(0.5, (1, 0), 0), (1.0, (0, 2), 0),
                                   (2.0, (0, 1), 1)], 0.3),
    # contraction whose top band has a genuinely nonlinear component
    "planar-stage": (2, [(0.2, (1, 0), 0), (1.0, (1, 1), 0),
                         (1.0, (0, 2), 0), (0.5, (0, 1), 1),
                         (1.0, (1, 1), 1)], 0.3),
    "three-band-contraction": (3, [(0.3, (1, 0, 0), 0), (1.0, (0, 2, 0), 0),
                                   (1.0, (0, 1, 1), 0), (1.0, (0, 0, 2), 0),
                                   (0.5, (0, 1, 0), 1),
                                   (0.75, (0, 0, 1), 2),
                                   (1.0, (1, 1, 0), 2)], 0.6),
    "linear-planar-saddle": (2, [(0.5, (1, 0), 0), (2.0, (0, 1), 1)], 0.3),
    "linear-contraction": (2, [(0.2, (1, 0), 0), (0.5, (0, 1), 1)], 0.3),
}

BUILTIN_SPECTRA = {
    # three adjacent contractive interval bands, each just under ratio 2
    "tight-three-bands": {"bands": [(1.0 / 16 + 1e-3, 0.125),
                                    (0.125 + 1e-3, 0.25),
                                    (0.25 + 1e-3, 0.5)]},
    # wide mixed spectrum passing the gap condition but not the two-band one
    "wide-gap-mixed": {"bands": [(0.1, 1.0 / 6), (2.0, 3.0), (9.0, 10.0)]},
    # five isolated moduli on both sides of the unit circle
    "five-point-mixed": {"moduli": [0.1, 1.0 / 6, 2.0, 5.0, 10.0]},
    "two-point-saddle": {"moduli": [0.5, 2.0]},
}

BUILTIN_FAMILIES = {
    # saddles (lam, 1/lam) with the multiplicative coupling
    "symmetric-saddle": lambda lam: (
        2, [(lam, (1, 0), 0), (1.0, (1, 1), 0), (1.0 / lam, (0, 1), 1)], 0.3),
    # contractions (lam, 0.5) with a quadratic coupling
    "quadratic-contraction": lambda lam: (
        2, [(lam, (1, 0), 0), (1.0, (0, 2), 0), (0.5, (0, 1), 1)], 0.3),
}


@dataclass
class RunConfig:
    """Parsed, validated configuration of one command run."""

    map_spec: tuple | None = None       # (dimension, terms, box_radius)
    map_name: str = "map"
    spectrum_moduli: list | None = None
    spectrum_bands: list | None = None
    gap_threshold: float = 0.2
    delta: float | None = None
    epsilon: float = 1e-3
    r0: float = 0.022
    r1: float = 0.066
    eta_target: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None
    n_seq: int = 8
    k_tail: int = 32
    lp_tol: float = 1e-9
    lp_resolution: int = 21
    cascade_resolution: int = 65
    working_radius: float | None = None
    cascade_tol: float = 1e-10
    kmax: int | None = None
    graph_degree: int = 6
    reporting_radius: float | None = None
    manifold_resolution: int = 33
    seed: int = 0
    plots: bool = True
    family: str | None = None
    family_parameters: list = field(default_factory=list)

    def build_map(self):
        if self.map_spec is None:
            raise ConfigError("this command needs a [map] section")
        dim, terms, radius = self.map_spec
        return MapModel.from_polynomial(dim, terms, box=Box.cube(radius, dim),
                                        name=self.map_name)


def _parse_terms(text, dimension):
    terms = []
    for lineno, raw in enumerate(text.strip().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(":")]
        if len(parts) != 3:
            raise ConfigError(
                f"terms line {lineno}: expected 'coeff : k1 .. kn : out', "
                f"got {raw!r}")
        try:
            coeff = float(parts[0])
            midx = tuple(int(k) for k in parts[1].split())
            out = int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"terms line {lineno}: {exc}") from exc
        if len(midx) != dimension:
            raise ConfigError(
                f"terms line {lineno}: multi-index length {len(midx)} != "
                f"dimension {dimension}")
        if not 1 <= out <= dimension:
            raise ConfigError(
                f"terms line {lineno}: output index {out} out of range "
                f"(1-based)")
        terms.append((coeff, midx, out - 1))
    if not terms:
        raise ConfigError("terms block is empty")
    return terms


def _parse_bands(text):
    bands = []
    for chunk in text.split(";"):
        vals = chunk.split()
        if not vals:
            continue
        if len(vals) != 2:
            raise ConfigError(f"band entry {chunk!r} needs two numbers")
        bands.append((float(vals[0]), float(vals[1])))
    if not bands:
        raise ConfigError("bands entry is empty")
    return bands


def _get(parser, section, option, cast, default):
    if not parser.has_option(section, option):
        return default
    raw = parser.get(section, option).strip()
    if raw.lower() in ("", "auto", "none"):
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {option}: {exc}") from exc


def load_config(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    cfg = RunConfig()
    if parser.has_section("map"):
        if parser.has_option("map", "builtin"):
            name = parser.get("map", "builtin").strip()
            if name not in BUILTIN_MAPS:
                raise ConfigError(
                    f"unknown builtin map {name!r}; available: "
                    + ", ".join(sorted(BUILTIN_MAPS)))
            cfg.map_spec = BUILTIN_MAPS[name]
            cfg.map_name = name
        else:
            try:
                dim = parser.getint("map", "dimension")
            except (configparser.NoOptionError, ValueError) as exc:
                raise ConfigError(f"[map] dimension: {exc}") from exc
            if not parser.has_option("map", "terms"):
                raise ConfigError("[map] needs either builtin or terms")
            terms = _parse_terms(parser.get("map", "terms"), dim)
            radius = _get(parser, "map", "box_radius", float, 0.3)
            cfg.map_spec = (dim, terms, radius)
        radius_override = _get(parser, "map", "box_radius", float, None)
        if radius_override is not None:
            cfg.map_spec = (cfg.map_spec[0], cfg.map_spec[1], radius_override)
    if parser.has_section("spectrum"):
        if parser.has_option("spectrum", "builtin"):
            name = parser.get("spectrum", "builtin").strip()
            if name not in BUILTIN_SPECTRA:
                raise ConfigError(
                    f"unknown builtin spectrum {name!r}; available: "
                    + ", ".join(sorted(BUILTIN_SPECTRA)))
            preset = BUILTIN_SPECTRA[name]
            cfg.spectrum_moduli = list(preset.get("moduli", [])) or None
            cfg.spectrum_bands = list(preset.get("bands", [])) or None
        if parser.has_option("spectrum", "moduli"):
            cfg.spectrum_moduli = [float(x) for x in
                                   parser.get("spectrum", "moduli").split()]
        if parser.has_option("spectrum", "bands"):
            cfg.spectrum_bands = _parse_bands(parser.get("spectrum", "bands"))
        cfg.gap_threshold = _get(parser, "spectrum", "gap_threshold", float,
                                 cfg.gap_threshold)
    if parser.has_section("conditions"):
        cfg.delta = _get(parser, "conditions", "delta", float, None)
        cfg.epsilon = _get(parser, "conditions", "epsilon", float,
                           cfg.epsilon)
    if parser.has_section("bump"):
        cfg.r0 = _get(parser, "bump", "r0", float, cfg.r0)
        cfg.r1 = _get(parser, "bump", "r1", float, cfg.r1)
        cfg.eta_target = _get(parser, "bump", "eta_target", float, None)
        if cfg.r0 >= cfg.r1:
            raise ConfigError("[bump] needs r0 < r1")
    if parser.has_section("lp"):
        cfg.gamma1 = _get(parser, "lp", "gamma1", float, None)
        cfg.gamma2 = _get(parser, "lp", "gamma2", float, None)
        if (cfg.gamma1 is None) != (cfg.gamma2 is None):
            raise ConfigError("[lp] set both gamma1 and gamma2 or neither")
        cfg.n_seq = _get(parser, "lp", "n_seq", int, cfg.n_seq)
        cfg.k_tail = _get(parser, "lp", "k_tail", int, cfg.k_tail)
        cfg.lp_tol = _get(parser, "lp", "tol", float, cfg.lp_tol)
        cfg.lp_resolution = _get(parser, "lp", "resolution", int,
                                 cfg.lp_resolution)
    if parser.has_section("cascade"):
        cfg.cascade_resolution = _get(parser, "cascade", "resolution", int,
                                      cfg.cascade_resolution)
        cfg.working_radius = _get(parser, "cascade", "working_radius", float,
                                  None)
        cfg.cascade_tol = _get(parser, "cascade", "tol", float,
                               cfg.cascade_tol)
        cfg.kmax = _get(parser, "cascade", "kmax", int, None)
        cfg.graph_degree = _get(parser, "cascade", "graph_degree", int,
                                cfg.graph_degree)
    if parser.has_section("hyperbolic"):
        cfg.reporting_radius = _get(parser, "hyperbolic", "reporting_radius",
                                    float, None)
        cfg.manifold_resolution = _get(parser, "hyperbolic",
                                       "manifold_resolution", int,
                                       cfg.manifold_resolution)
    if parser.has_section("run"):
        cfg.seed = _get(parser, "run", "seed", int, cfg.seed)
        plots = _get(parser, "run", "plots", str, "on")
        cfg.plots = str(plots).lower() in ("on", "true", "1", "yes")
    if parser.has_section("sharpness"):
        cfg.family = _get(parser, "sharpness", "family", str, None)
        if cfg.family is not None and cfg.family not in BUILTIN_FAMILIES:
            raise ConfigError(
                f"unknown family {cfg.family!r}; available: "
                + ", ".join(sorted(BUILTIN_FAMILIES)))
        if parser.has_option("sharpness", "parameters"):
            cfg.family_parameters = [
                float(x) for x in
                parser.get("sharpness", "parameters").split()]
    return cfg


def build_family(cfg):
    if cfg.family is None:
        raise ConfigError("sharpness needs [sharpness] family = <name>")
    if not cfg.family_parameters:
        raise ConfigError("sharpness needs [sharpness] parameters = ...")
    factory = BUILTIN_FAMILIES[cfg.family]
    members = []
    for lam in cfg.family_parameters:
        dim, terms, radius = factory(lam)
        members.append((lam, MapModel.from_polynomial(
            dim, terms, box=Box.cube(radius, dim),
            name=f"{cfg.family}({lam})")))
    return members
