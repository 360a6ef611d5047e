"""Dense grid functions on boxes with separable interpolation.

GridFunction is the universal numerical carrier for graphs, foliation
slices and cascade limits.  Values live on a uniform tensor grid; queries
are answered by tensor-product Lagrange interpolation of order 1
(multilinear, the default) or 3 (4-point cubic, exact on per-axis cubics).
Out-of-box queries can raise, clamp, or polynomially extend the boundary
stencil, which is what the cascade's graph transform needs.
"""

from __future__ import annotations

import numpy as np

from .errors import OutsideBox


class Box:
    """Axis-aligned box given by per-axis (lo, hi) intervals."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo/hi shape mismatch")
        if np.any(self.hi <= self.lo):
            raise ValueError("box must have positive extent on every axis")

    @classmethod
    def cube(cls, radius, dim, center=None):
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        r = float(radius)
        return cls(c - r, c + r)

    @property
    def dim(self):
        return self.lo.size

    @property
    def widths(self):
        return self.hi - self.lo

    @property
    def radius(self):
        return 0.5 * float(np.max(self.widths))

    def contains(self, pts, pad=0.0):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo - pad) & (pts <= self.hi + pad), axis=1)

    def scaled(self, factors):
        """Box with each axis extent multiplied by the given factor(s)."""
        f = np.broadcast_to(np.asarray(factors, dtype=float), (self.dim,))
        mid = 0.5 * (self.lo + self.hi)
        half = 0.5 * self.widths * f
        return Box(mid - half, mid + half)

    def sample(self, n, rng):
        """n uniform samples, shape (n, dim)."""
        u = rng.random((n, self.dim))
        return self.lo + u * self.widths

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def _axis_nodes(box, resolution):
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (box.dim,))
    if np.any(res < 2):
        raise ValueError("need at least 2 nodes per axis")
    return [np.linspace(box.lo[a], box.hi[a], res[a]) for a in range(box.dim)]


class GridFunction:
    """Function sampled on a uniform tensor grid over a box.

    Parameters
    ----------
    box : Box
        Domain of the samples.
    values : ndarray
        Shape (n1, ..., nd, *out_shape).  out_shape may be () for scalars,
        (m,) for vectors or (r, c) for matrices.
    out_shape : tuple
        Trailing shape of one output value.
    order : int
        Interpolation order, 1 (multilinear) or 3 (4-point Lagrange cubic).
    extrapolation : str
        "error"  -> OutsideBox beyond the box,
        "clamp"  -> evaluate at the nearest box point,
        "poly"   -> extend the boundary interpolation stencil polynomially.
    """

    def __init__(self, box, values, out_shape, order=1, extrapolation="error"):
        self.box = box
        self.values = np.asarray(values, dtype=float)
        self.out_shape = tuple(out_shape)
        if order not in (1, 3):
            raise ValueError("order must be 1 or 3")
        self.order = order
        if extrapolation not in ("error", "clamp", "poly"):
            raise ValueError("bad extrapolation mode")
        self.extrapolation = extrapolation
        d = box.dim
        self.grid_shape = self.values.shape[:d]
        if self.values.shape[d:] != self.out_shape:
            raise ValueError("values trailing shape does not match out_shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        self.axes = _axis_nodes(box, self.grid_shape)
        self.spacing = np.array([ax[1] - ax[0] for ax in self.axes])
        if self.order == 3 and any(n < 4 for n in self.grid_shape):
            raise ValueError("cubic interpolation needs >= 4 nodes per axis")

    # -- construction ------------------------------------------------------

    @classmethod
    def sample(cls, fn, box, resolution, out_shape=None, order=1,
               extrapolation="error"):
        """Sample a vectorized callable fn((N, d)) -> (N, *out_shape)."""
        axes = _axis_nodes(box, resolution)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.asarray(fn(pts), dtype=float)
        if out_shape is None:
            out_shape = vals.shape[1:]
        grid_shape = tuple(len(ax) for ax in axes)
        vals = vals.reshape(grid_shape + tuple(out_shape))
        return cls(box, vals, out_shape, order=order, extrapolation=extrapolation)

    def node_points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node_values(self):
        return self.values.reshape((-1,) + self.out_shape)

    # -- evaluation ----------------------------------------------------------

    def _stencil(self, x, axis):
        """Per-point stencil start indices and local coordinates on one axis."""
        ax = self.axes[axis]
        n = ax.size
        h = self.spacing[axis]
        t = (x - ax[0]) / h
        if self.order == 1:
            i0 = np.clip(np.floor(t).astype(int), 0, n - 2)
            return i0, t - i0
        i0 = np.clip(np.floor(t).astype(int) - 1, 0, n - 4)
        return i0, t - i0

    def _weights(self, s):
        """Lagrange weights on the local stencil coordinate s."""
        if self.order == 1:
            return np.stack([1.0 - s, s], axis=-1)
        # nodes at local coordinates 0,1,2,3
        w0 = -(s - 1) * (s - 2) * (s - 3) / 6.0
        w1 = s * (s - 2) * (s - 3) / 2.0
        w2 = -s * (s - 1) * (s - 3) / 2.0
        w3 = s * (s - 1) * (s - 2) / 6.0
        return np.stack([w0, w1, w2, w3], axis=-1)

    def eval(self, pts):
        """Interpolate at pts, shape (N, d) -> (N, *out_shape)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] != self.box.dim:
            raise ValueError("point dimension mismatch")
        if self.extrapolation == "error":
            pad = 1e-9 * float(np.max(self.box.widths))
            if not np.all(self.box.contains(pts, pad=pad)):
                raise OutsideBox("evaluation point outside grid box")
        x = pts
        if self.extrapolation == "clamp":
            x = np.clip(pts, self.box.lo, self.box.hi)
        k = self.order + 1
        idx = []
        wts = []
        for a in range(self.box.dim):
            i0, s = self._stencil(x[:, a], a)
            idx.append(i0)
            wts.append(self._weights(s))
        # accumulate over the k^d stencil corners
        out = np.zeros((pts.shape[0],) + self.out_shape)
        d = self.box.dim
        flat = self.values.reshape((-1,) + self.out_shape)
        strides = np.array([int(np.prod(self.grid_shape[a + 1:])) for a in range(d)])
        for corner in np.ndindex(*(k,) * d):
            lin = np.zeros(pts.shape[0], dtype=int)
            w = np.ones(pts.shape[0])
            for a in range(d):
                lin += (idx[a] + corner[a]) * strides[a]
                w = w * wts[a][:, corner[a]]
            out += w.reshape((-1,) + (1,) * len(self.out_shape)) * flat[lin]
        return out

    def __call__(self, pts):
        return self.eval(pts)

    def derivative(self, pts, step=None):
        """Central-difference Jacobian of the interpolant.

        Returns shape (N, *out_shape, d).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.box.dim
        out = np.zeros((pts.shape[0],) + self.out_shape + (d,))
        for a in range(d):
            h = float(self.spacing[a]) * 0.25 if step is None else float(step)
            ep = pts.copy()
            em = pts.copy()
            ep[:, a] += h
            em[:, a] -= h
            if self.extrapolation == "error":
                # keep probes inside the box
                ep[:, a] = np.minimum(ep[:, a], self.box.hi[a])
                em[:, a] = np.maximum(em[:, a], self.box.lo[a])
            denom = (ep[:, a] - em[:, a]).reshape((-1,) + (1,) * len(self.out_shape))
            out[..., a] = (self.eval(ep) - self.eval(em)) / denom
        return out

    def max_abs(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    # -- serialization -------------------------------------------------------

    def to_table(self):
        """Flat table of node coordinates followed by value components."""
        pts = self.node_points()
        vals = self.node_values().reshape(pts.shape[0], -1)
        return np.hstack([pts, vals])

    @classmethod
    def from_table(cls, table, dim, grid_shape, out_shape, order=1,
                   extrapolation="error"):
        table = np.asarray(table, dtype=float)
        pts = table[:, :dim]
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        vals = table[:, dim:].reshape(tuple(grid_shape) + tuple(out_shape))
        return cls(Box(lo, hi), vals, out_shape, order=order,
                   extrapolation=extrapolation)


def grid_sample(fn, box, resolution, order=1, extrapolation="error"):
    """Sample an evaluator into a GridFunction (vector or scalar valued)."""
    return GridFunction.sample(fn, box, resolution, order=order,
                               extrapolation=extrapolation)


def grid_eval(g, pts):
    return g.eval(pts)


def grid_derivative(g, pts):
    return g.derivative(pts)
