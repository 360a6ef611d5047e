"""Invertible near-identity coordinate transforms and their compositions.

Each transform knows its forward map, its inverse (exact algebra where
possible, damped Newton otherwise) and its Jacobian.  A TransformChain
composes them; the chain built by the linearizers is the conjugacy.
"""

from __future__ import annotations

import numpy as np

from .errors import NewtonFailed


def damped_newton(residual_fn, jac_fn, seeds, tol=1e-12, max_iter=50):
    """Vectorized damped Newton for residual_fn(x) = 0."""
    x = np.array(seeds, dtype=float)
    res = residual_fn(x)
    norm = np.linalg.norm(res, axis=1)
    for _ in range(max_iter):
        if np.all(norm <= tol):
            return x
        jac = jac_fn(x)
        step = np.linalg.solve(jac, res[..., None])[..., 0]
        scale = np.ones(x.shape[0])
        x_try, res_try, norm_try = x, res, norm
        for _ in range(25):
            x_try = x - scale[:, None] * step
            res_try = residual_fn(x_try)
            norm_try = np.linalg.norm(res_try, axis=1)
            bad = (norm_try > norm) & (norm > tol)
            if not np.any(bad):
                break
            scale = np.where(bad, scale * 0.5, scale)
        x, res, norm = x_try, res_try, norm_try
    if np.all(norm <= 1e4 * tol):
        return x
    raise NewtonFailed(
        f"newton residual {float(np.max(norm)):.3g} after {max_iter} iterations")


def _fd_jacobian(fn, pts, h):
    pts = np.atleast_2d(pts)
    n = pts.shape[1]
    base = fn(pts)
    out = np.zeros((pts.shape[0], base.shape[1], n))
    for a in range(n):
        ep = pts.copy()
        em = pts.copy()
        ep[:, a] += h
        em[:, a] -= h
        out[:, :, a] = (fn(ep) - fn(em)) / (2.0 * h)
    return out


class Transform:
    """Base class; subclasses fill in forward/inverse/jacobian."""

    label = "transform"
    fd_step = 1e-6

    def forward(self, pts):
        raise NotImplementedError

    def inverse(self, pts):
        raise NotImplementedError

    def jacobian(self, pts):
        return _fd_jacobian(self.forward, np.atleast_2d(pts), self.fd_step)

    def export(self):
        """Serializable payload: (kind, metadata dict, {name: array})."""
        raise NotImplementedError


class IdentityTransform(Transform):
    label = "identity"

    def __init__(self, dim):
        self.dim = int(dim)

    def forward(self, pts):
        return np.atleast_2d(np.asarray(pts, dtype=float)).copy()

    def inverse(self, pts):
        return self.forward(pts)

    def jacobian(self, pts):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(np.eye(self.dim),
                               (pts.shape[0], self.dim, self.dim)).copy()

    def export(self):
        return "identity", {"dim": self.dim}, {}


class LinearTransform(Transform):
    label = "linear"

    def __init__(self, matrix, label="linear"):
        self.matrix = np.asarray(matrix, dtype=float)
        self.inv_matrix = np.linalg.inv(self.matrix)
        self.label = label

    def forward(self, pts):
        return np.atleast_2d(pts) @ self.matrix.T

    def inverse(self, pts):
        return np.atleast_2d(pts) @ self.inv_matrix.T

    def jacobian(self, pts):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(self.matrix,
                               (pts.shape[0],) + self.matrix.shape).copy()

    def export(self):
        return "linear", {"label": self.label}, {"matrix": self.matrix}


class GraphStraighten(Transform):
    """Subtract invariant-graph values from the (u, v) coordinates.

    theta(x) = (u - h1(w), v - h2(w), w); exact algebraic inverse.
    Either graph may be None when its coordinate block is empty.
    """

    label = "graph-straighten"

    def __init__(self, dim, u_idx, v_idx, w_idx, h1, h2):
        self.dim = int(dim)
        self.u_idx = list(u_idx)
        self.v_idx = list(v_idx)
        self.w_idx = list(w_idx)
        self.h1 = h1
        self.h2 = h2

    def _offsets(self, pts):
        w = pts[:, self.w_idx]
        off = np.zeros_like(pts)
        if self.h1 is not None and self.u_idx:
            off[:, self.u_idx] = self.h1.eval(w)
        if self.h2 is not None and self.v_idx:
            off[:, self.v_idx] = self.h2.eval(w)
        return off

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return pts - self._offsets(pts)

    def inverse(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return pts + self._offsets(pts)

    def jacobian(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        jac = np.broadcast_to(np.eye(self.dim), (n, self.dim, self.dim)).copy()
        w = pts[:, self.w_idx]
        if self.h1 is not None and self.u_idx:
            dh = self.h1.derivative(w)
            for r, i in enumerate(self.u_idx):
                for c, j in enumerate(self.w_idx):
                    jac[:, i, j] -= dh[:, r, c]
        if self.h2 is not None and self.v_idx:
            dh = self.h2.derivative(w)
            for r, i in enumerate(self.v_idx):
                for c, j in enumerate(self.w_idx):
                    jac[:, i, j] -= dh[:, r, c]
        return jac

    def export(self):
        meta = {"dim": self.dim, "u_idx": self.u_idx, "v_idx": self.v_idx,
                "w_idx": self.w_idx}
        arrays = {}
        for name, g in (("h1", self.h1), ("h2", self.h2)):
            if g is not None:
                arrays[name + "_table"] = g.to_table()
                meta[name + "_grid_shape"] = list(g.grid_shape)
                meta[name + "_out_shape"] = list(g.out_shape)
                meta[name + "_order"] = g.order
        return "graph-straighten", meta, arrays


class VComponentTransform(Transform):
    """Replace the v-coordinates by a limit function of all coordinates.

    phi(x) = (u, psi(x), w); the inverse interpolates a precomputed grid
    of the solved v-preimages and polishes it with Newton on demand.
    """

    label = "band-transform"

    def __init__(self, dim, v_idx, psi_fn, psi_hat, polish_tol=None):
        self.dim = int(dim)
        self.v_idx = list(v_idx)
        self.psi_fn = psi_fn          # callable pts -> (N, len(v_idx))
        self.psi_hat = psi_hat        # GridFunction pts -> v-preimage
        self.polish_tol = polish_tol

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        out[:, self.v_idx] = self.psi_fn(pts)
        return out

    def inverse(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        out[:, self.v_idx] = self.psi_hat.eval(pts)
        if self.polish_tol is not None:
            out = self._polish(out, pts)
        return out

    def _polish(self, guess, targets):
        v_idx = self.v_idx

        def resid(v_flat):
            x = guess.copy()
            x[:, v_idx] = v_flat
            return self.psi_fn(x) - targets[:, v_idx]

        def jac(v_flat):
            x = guess.copy()
            x[:, v_idx] = v_flat
            h = self.fd_step
            out = np.zeros((x.shape[0], len(v_idx), len(v_idx)))
            for c in range(len(v_idx)):
                ep = x.copy()
                em = x.copy()
                ep[:, v_idx[c]] += h
                em[:, v_idx[c]] -= h
                out[:, :, c] = (self.psi_fn(ep) - self.psi_fn(em)) / (2 * h)
            return out

        solved = damped_newton(resid, jac, guess[:, v_idx],
                               tol=self.polish_tol)
        out = guess.copy()
        out[:, v_idx] = solved
        return out

    def export(self):
        meta = {"dim": self.dim, "v_idx": self.v_idx,
                "psi_hat_grid_shape": list(self.psi_hat.grid_shape),
                "psi_hat_out_shape": list(self.psi_hat.out_shape),
                "psi_hat_order": self.psi_hat.order}
        arrays = {"psi_hat_table": self.psi_hat.to_table()}
        if hasattr(self.psi_fn, "grid"):
            g = self.psi_fn.grid
            meta.update({"psi_grid_shape": list(g.grid_shape),
                         "psi_out_shape": list(g.out_shape),
                         "psi_order": g.order})
            arrays["psi_table"] = g.to_table()
        return "band-transform", meta, arrays


class AxisStraighten(Transform):
    """Subtract a manifold graph so one invariant manifold becomes an axis.

    which="unstable": x_minus -> x_minus - g(x_plus);
    which="stable":   x_plus  -> x_plus  - g(x_minus).
    """

    label = "axis-straighten"

    def __init__(self, dim, minus_idx, plus_idx, graph, which):
        self.dim = int(dim)
        self.minus_idx = list(minus_idx)
        self.plus_idx = list(plus_idx)
        self.graph = graph
        if which not in ("stable", "unstable"):
            raise ValueError("which must be 'stable' or 'unstable'")
        self.which = which

    def _target_source(self):
        if self.which == "unstable":
            return self.minus_idx, self.plus_idx
        return self.plus_idx, self.minus_idx

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
        tgt, src = self._target_source()
        pts[:, tgt] -= self.graph.eval(pts[:, src])
        return pts

    def inverse(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
        tgt, src = self._target_source()
        pts[:, tgt] += self.graph.eval(pts[:, src])
        return pts

    def jacobian(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        jac = np.broadcast_to(np.eye(self.dim), (n, self.dim, self.dim)).copy()
        tgt, src = self._target_source()
        dg = self.graph.derivative(pts[:, src])
        for r, i in enumerate(tgt):
            for c, j in enumerate(src):
                jac[:, i, j] -= dg[:, r, c]
        return jac

    def export(self):
        meta = {"dim": self.dim, "minus_idx": self.minus_idx,
                "plus_idx": self.plus_idx, "which": self.which,
                "graph_grid_shape": list(self.graph.grid_shape),
                "graph_out_shape": list(self.graph.out_shape),
                "graph_order": self.graph.order}
        return "axis-straighten", meta, {"graph_table": self.graph.to_table()}


class FoliationCoordinates(Transform):
    """Decoupling coordinates from the two foliations' axis intersections.

    forward(x) = (minus part of the unstable leaf of x at parameter 0,
                  plus part of the stable leaf of x at parameter 0);
    the inverse is a damped Newton solve seeded with the identity.
    """

    label = "foliation-coordinates"

    def __init__(self, dim, minus_idx, plus_idx, stable_q0, unstable_q0,
                 newton_tol=1e-11):
        self.dim = int(dim)
        self.minus_idx = list(minus_idx)
        self.plus_idx = list(plus_idx)
        self.stable_q0 = stable_q0      # GridFunction on (x, y_minus)
        self.unstable_q0 = unstable_q0  # GridFunction on (x, y_plus)
        self.newton_tol = newton_tol

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        zs = np.hstack([pts, np.zeros((n, len(self.plus_idx)))])
        leaf_u = pts + self.unstable_q0.eval(zs)
        zm = np.hstack([pts, np.zeros((n, len(self.minus_idx)))])
        leaf_s = pts + self.stable_q0.eval(zm)
        out = pts.copy()
        out[:, self.minus_idx] = leaf_u[:, self.minus_idx]
        out[:, self.plus_idx] = leaf_s[:, self.plus_idx]
        return out

    def inverse(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))

        def resid(x):
            return self.forward(x) - pts

        def jac(x):
            return _fd_jacobian(self.forward, x, self.fd_step)

        return damped_newton(resid, jac, pts, tol=self.newton_tol)

    def export(self):
        meta = {"dim": self.dim, "minus_idx": self.minus_idx,
                "plus_idx": self.plus_idx}
        arrays = {}
        for name, g in (("stable_q0", self.stable_q0),
                        ("unstable_q0", self.unstable_q0)):
            arrays[name + "_table"] = g.to_table()
            meta[name + "_grid_shape"] = list(g.grid_shape)
            meta[name + "_out_shape"] = list(g.out_shape)
            meta[name + "_order"] = g.order
        return "foliation-coordinates", meta, arrays


class BlockFactors(Transform):
    """Apply one chain to the minus coordinates and another to the plus."""

    label = "block-factors"

    def __init__(self, dim, minus_idx, plus_idx, chain_minus, chain_plus):
        self.dim = int(dim)
        self.minus_idx = list(minus_idx)
        self.plus_idx = list(plus_idx)
        self.chain_minus = chain_minus
        self.chain_plus = chain_plus

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        out[:, self.minus_idx] = self.chain_minus.forward(pts[:, self.minus_idx])
        out[:, self.plus_idx] = self.chain_plus.forward(pts[:, self.plus_idx])
        return out

    def inverse(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        out[:, self.minus_idx] = self.chain_minus.inverse(pts[:, self.minus_idx])
        out[:, self.plus_idx] = self.chain_plus.inverse(pts[:, self.plus_idx])
        return out

    def export(self):
        meta = {"dim": self.dim, "minus_idx": self.minus_idx,
                "plus_idx": self.plus_idx,
                "chain_minus": self.chain_minus.export_manifest(),
                "chain_plus": self.chain_plus.export_manifest()}
        arrays = {}
        for prefix, chain in (("minus", self.chain_minus),
                              ("plus", self.chain_plus)):
            for i, t in enumerate(chain.transforms):
                _, _, arrs = t.export()
                for name, arr in arrs.items():
                    arrays[f"{prefix}_{i}_{name}"] = arr
        return "block-factors", meta, arrays


class TransformChain:
    """Composition of transforms; the list is applied first-to-last.

    For a cascade Phi = Phi_1 o ... o Phi_m the list is
    [Phi_m, ..., Phi_1] so that forward(x) applies Phi_m first.
    """

    def __init__(self, transforms, dim):
        self.transforms = list(transforms)
        self.dim = int(dim)

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        for t in self.transforms:
            pts = t.forward(pts)
        return pts

    def inverse(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        for t in reversed(self.transforms):
            pts = t.inverse(pts)
        return pts

    def jacobian(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        jac = np.broadcast_to(np.eye(self.dim),
                              (pts.shape[0], self.dim, self.dim)).copy()
        for t in self.transforms:
            jac = np.einsum("nij,njk->nik", t.jacobian(pts), jac)
            pts = t.forward(pts)
        return jac

    def origin_residuals(self):
        """(|Phi(0)|, |DPhi(0) - I|) as a quick sanity pair."""
        origin = np.zeros((1, self.dim))
        phi0 = float(np.linalg.norm(self.forward(origin)))
        dphi0 = float(np.linalg.norm(self.jacobian(origin)[0]
                                     - np.eye(self.dim)))
        return phi0, dphi0

    def export_manifest(self):
        return [{"kind": t.export()[0], "meta": t.export()[1],
                 "label": t.label} for t in self.transforms]
