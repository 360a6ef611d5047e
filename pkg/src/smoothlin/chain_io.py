"""Save and load transform chains as labeled tables plus a manifest.

Arrays go to CSV with 17 significant digits (lossless for doubles); the
manifest carries the structure.  Loading rebuilds evaluable transforms,
including Newton-based inverses.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .contraction import PolyGraph, _PsiEvaluator
from .grids import Box, GridFunction
from .transforms import (AxisStraighten, BlockFactors, FoliationCoordinates,
                         GraphStraighten, IdentityTransform, LinearTransform,
                         TransformChain, VComponentTransform)

FLOAT_FMT = "%.17g"


def _write_csv(path, array):
    np.savetxt(path, np.atleast_2d(np.asarray(array, dtype=float)),
               fmt=FLOAT_FMT, delimiter=",")


def _read_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def _encode_graph(graph):
    if graph is None:
        return None
    if isinstance(graph, PolyGraph):
        return {
            "type": "poly",
            "lo": graph.box.lo.tolist(),
            "hi": graph.box.hi.tolist(),
            "degree": graph.degree,
            "coeffs": np.asarray(graph.coeffs).tolist(),
        }
    return {
        "type": "grid",
        "lo": graph.box.lo.tolist(),
        "hi": graph.box.hi.tolist(),
        "grid_shape": list(graph.grid_shape),
        "out_shape": list(graph.out_shape),
        "order": graph.order,
        "extrapolation": graph.extrapolation,
        "values": np.asarray(graph.values).ravel().tolist(),
    }


def _decode_graph(payload):
    if payload is None:
        return None
    box = Box(payload["lo"], payload["hi"])
    if payload["type"] == "poly":
        poly = PolyGraph(box, payload["degree"])
        poly.coeffs = np.asarray(payload["coeffs"], dtype=float)
        poly.out_dim = poly.coeffs.shape[1]
        return poly
    shape = tuple(payload["grid_shape"]) + tuple(payload["out_shape"])
    values = np.asarray(payload["values"], dtype=float).reshape(shape)
    return GridFunction(box, values, tuple(payload["out_shape"]),
                        order=payload["order"],
                        extrapolation=payload["extrapolation"])


def _encode_transform(t):
    if isinstance(t, IdentityTransform):
        return {"kind": "identity", "dim": t.dim}
    if isinstance(t, LinearTransform):
        return {"kind": "linear", "label": t.label,
                "matrix": t.matrix.tolist()}
    if isinstance(t, GraphStraighten):
        return {"kind": "graph-straighten", "dim": t.dim, "u_idx": t.u_idx,
                "v_idx": t.v_idx, "w_idx": t.w_idx,
                "h1": _encode_graph(t.h1), "h2": _encode_graph(t.h2)}
    if isinstance(t, VComponentTransform):
        theta = getattr(t.psi_fn, "theta", None)
        grid = getattr(t.psi_fn, "grid", None)
        if grid is None:
            raise ValueError("cannot serialize a band transform without "
                             "a gridded limit")
        return {"kind": "band-transform", "dim": t.dim, "v_idx": t.v_idx,
                "psi": _encode_graph(grid),
                "theta": _encode_transform(theta) if theta is not None
                else None,
                "psi_hat": _encode_graph(t.psi_hat)}
    if isinstance(t, AxisStraighten):
        return {"kind": "axis-straighten", "dim": t.dim,
                "minus_idx": t.minus_idx, "plus_idx": t.plus_idx,
                "which": t.which, "graph": _encode_graph(t.graph)}
    if isinstance(t, FoliationCoordinates):
        return {"kind": "foliation-coordinates", "dim": t.dim,
                "minus_idx": t.minus_idx, "plus_idx": t.plus_idx,
                "stable_q0": _encode_graph(t.stable_q0),
                "unstable_q0": _encode_graph(t.unstable_q0)}
    if isinstance(t, BlockFactors):
        return {"kind": "block-factors", "dim": t.dim,
                "minus_idx": t.minus_idx, "plus_idx": t.plus_idx,
                "chain_minus": [_encode_transform(s)
                                for s in t.chain_minus.transforms],
                "chain_minus_dim": t.chain_minus.dim,
                "chain_plus": [_encode_transform(s)
                               for s in t.chain_plus.transforms],
                "chain_plus_dim": t.chain_plus.dim}
    raise ValueError(f"cannot serialize transform {t!r}")


def _decode_transform(payload):
    kind = payload["kind"]
    if kind == "identity":
        return IdentityTransform(payload["dim"])
    if kind == "linear":
        return LinearTransform(np.asarray(payload["matrix"], dtype=float),
                               label=payload.get("label", "linear"))
    if kind == "graph-straighten":
        return GraphStraighten(payload["dim"], payload["u_idx"],
                               payload["v_idx"], payload["w_idx"],
                               _decode_graph(payload["h1"]),
                               _decode_graph(payload["h2"]))
    if kind == "band-transform":
        theta = (_decode_transform(payload["theta"])
                 if payload["theta"] is not None else None)
        psi_fn = _PsiEvaluator(_decode_graph(payload["psi"]), theta)
        return VComponentTransform(payload["dim"], payload["v_idx"], psi_fn,
                                   _decode_graph(payload["psi_hat"]))
    if kind == "axis-straighten":
        return AxisStraighten(payload["dim"], payload["minus_idx"],
                              payload["plus_idx"],
                              _decode_graph(payload["graph"]),
                              payload["which"])
    if kind == "foliation-coordinates":
        return FoliationCoordinates(payload["dim"], payload["minus_idx"],
                                    payload["plus_idx"],
                                    _decode_graph(payload["stable_q0"]),
                                    _decode_graph(payload["unstable_q0"]))
    if kind == "block-factors":
        cm = TransformChain([_decode_transform(p)
                             for p in payload["chain_minus"]],
                            payload["chain_minus_dim"])
        cp = TransformChain([_decode_transform(p)
                             for p in payload["chain_plus"]],
                            payload["chain_plus_dim"])
        return BlockFactors(payload["dim"], payload["minus_idx"],
                            payload["plus_idx"], cm, cp)
    raise ValueError(f"unknown transform kind {kind!r}")


def save_chain(chain, directory):
    """Write manifest.json plus per-transform grid tables."""
    os.makedirs(directory, exist_ok=True)
    manifest = {"dim": chain.dim,
                "transforms": [_encode_transform(t)
                               for t in chain.transforms]}
    with open(os.path.join(directory, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    # also emit human-readable grid tables
    for i, t in enumerate(chain.transforms):
        payload = _encode_transform(t)
        for name, graph in _iter_graphs(payload):
            g = _decode_graph(graph)
            table = g.to_table() if hasattr(g, "to_table") else None
            if table is not None:
                _write_csv(os.path.join(
                    directory, f"transform{i:02d}_{name}.csv"), table)


def _iter_graphs(payload, prefix=""):
    for key, val in payload.items():
        if isinstance(val, dict) and val.get("type") in ("grid", "poly"):
            yield prefix + key, val
        elif isinstance(val, dict):
            yield from _iter_graphs(val, prefix + key + "_")
        elif isinstance(val, list) and val and isinstance(val[0], dict) \
                and "kind" in val[0]:
            for j, sub in enumerate(val):
                yield from _iter_graphs(sub, prefix + f"{key}{j}_")


def load_chain(directory):
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") \
            as fh:
        manifest = json.load(fh)
    transforms = [_decode_transform(p) for p in manifest["transforms"]]
    return TransformChain(transforms, manifest["dim"])
