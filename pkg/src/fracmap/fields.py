"""Uniform grids, vector fields with exterior data, and sphere targets.

A :class:`VectorField` stores samples of a map ``u: R^n -> R^d`` on the nodes
of a :class:`GridSpec`. Nodes are the midpoints of cells of side ``h``; every
quadrature in the package uses those cells. Outside the sampled box the map
is described by an exterior descriptor that can be evaluated anywhere, so
nonlocal integrals over all of ``R^n`` have a well-defined tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

UNIT_TOL = 1e-12


class DomainError(ValueError):
    """Raised when a value lies outside the domain of an operation."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``origin + h * index`` with ``counts[i]`` nodes per axis."""

    origin: tuple
    h: float
    counts: tuple

    def __post_init__(self):
        origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "h", float(self.h))
        if len(origin) != len(counts):
            raise ValueError("origin and counts must have the same length")
        if not self.h > 0:
            raise ValueError("grid spacing h must be positive")
        if any(c < 2 for c in counts):
            raise ValueError("need at least 2 nodes per axis")

    @classmethod
    def centered(cls, n: int, half_width: float, h: float, center=None,
                 node_at_center: bool = False) -> "GridSpec":
        """Grid covering ``[c - half_width, c + half_width]^n``.

        With ``node_at_center=False`` (default) the center is a cell corner,
        so no node sits exactly on it.
        """
        c = np.zeros(n) if center is None else np.asarray(center, float)
        if node_at_center:
            m = int(np.ceil(half_width / h - 1e-9))
            counts = (2 * m + 1,) * n
            origin = c - m * h
        else:
            m = int(np.ceil(half_width / h - 0.5 - 1e-9))
            counts = (2 * m + 2,) * n
            origin = c - (m + 0.5) * h
        return cls(tuple(origin), h, counts)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.h * (np.asarray(self.counts) - 1)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def axes(self) -> list:
        return [o + self.h * np.arange(c) for o, c in zip(self.origin, self.counts)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``counts + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        """Node coordinates flattened in row-major order, shape ``(size, n)``."""
        return self.coords().reshape(-1, self.n)

    def contains(self, pts, pad: float = 0.0) -> np.ndarray:
        """Mask of points inside the closed node box (shrunk by ``pad``)."""
        pts = np.atleast_2d(pts)
        lo = self.lower + pad - 1e-12
        hi = self.upper - pad + 1e-12
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def index_of(self, x) -> tuple:
        """Multi-index of the node nearest to ``x`` (clipped to the grid)."""
        idx = np.rint((np.asarray(x, float) - self.lower) / self.h).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.counts) - 1)
        return tuple(int(i) for i in idx)

    def is_aligned_with(self, other: "GridSpec") -> bool:
        """True when both grids share ``h`` and their nodes coincide."""
        if other.n != self.n or not np.isclose(other.h, self.h, rtol=1e-12):
            return False
        off = (other.lower - self.lower) / self.h
        return bool(np.allclose(off, np.rint(off), atol=1e-9))

    def offset_in(self, other: "GridSpec") -> tuple:
        """Index of this grid's first node inside an aligned grid ``other``."""
        if not other.is_aligned_with(self):
            raise ValueError("grids are not aligned")
        return tuple(int(i) for i in np.rint((self.lower - other.lower) / self.h))


# --------------------------------------------------------------------------
# exterior descriptors


class Exterior:
    """Analytic description of a field outside its sampled box.

    ``far_mean`` and ``far_mean_square`` describe the field at infinity; they
    close the part of kernel integrals that lies beyond the quadrature
    truncation radius. ``None`` means the tail is unknown and is dropped.
    ``max_cell`` caps the quadrature cell size used in exterior shells.
    """

    name = "abstract"
    far_mean: Optional[np.ndarray] = None
    far_mean_square: Optional[float] = None
    max_cell: float = np.inf

    def __call__(self, pts: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def header(self) -> str:
        return self.name


class ConstantExterior(Exterior):
    name = "constant"

    def __init__(self, c):
        self.c = np.atleast_1d(np.asarray(c, float))
        self.far_mean = self.c
        self.far_mean_square = float(self.c @ self.c)

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(self.c, (pts.shape[0], self.c.size)).copy()

    def header(self):
        return "constant " + " ".join(repr(float(v)) for v in self.c)

    def __eq__(self, other):
        return isinstance(other, ConstantExterior) and np.array_equal(self.c, other.c)


class VortexExterior(Exterior):
    """The map ``x / |x|`` in two dimensions; ``(1, 0)`` at the origin."""

    name = "vortex"
    far_mean = np.zeros(2)
    far_mean_square = 1.0

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        return vortex_values(pts)

    def __eq__(self, other):
        return isinstance(other, VortexExterior)


class FunctionExterior(Exterior):
    """Exterior given by an arbitrary vectorized callable ``pts -> values``."""

    def __init__(self, func: Callable, name: str = "function", far_mean=None,
                 far_mean_square=None, max_cell: float = np.inf):
        self.func = func
        self.name = name
        self.far_mean = None if far_mean is None else np.atleast_1d(np.asarray(far_mean, float))
        self.far_mean_square = far_mean_square
        self.max_cell = max_cell

    def __call__(self, pts):
        out = np.asarray(self.func(np.atleast_2d(pts)), float)
        return out.reshape(np.atleast_2d(pts).shape[0], -1)


def vortex_values(pts: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(pts, axis=-1)
    out = np.empty(pts.shape[:-1] + (2,))
    safe = r > 0
    out[safe] = pts[safe] / r[safe, None]
    out[~safe] = (1.0, 0.0)
    return out


# --------------------------------------------------------------------------
# sphere target


@dataclass(frozen=True)
class SphereTarget:
    """The unit sphere ``S^{d-1}`` in ``R^d``."""

    d: int

    def project(self, v) -> np.ndarray:
        return project_to_sphere(v)

    def tangent_project(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Project ``v`` onto the tangent space ``u^perp`` pointwise."""
        return v - np.sum(u * v, axis=-1, keepdims=True) * u

    def contains(self, v, tol: float = UNIT_TOL) -> np.ndarray:
        return np.abs(np.linalg.norm(v, axis=-1) - 1.0) <= tol


def project_to_sphere(v) -> np.ndarray:
    """Nearest-point projection ``v / |v|`` onto the unit sphere.

    Works on a single vector or on an array of vectors along the last axis.

    Raises
    ------
    DomainError
        If any input vector is zero.
    """
    v = np.asarray(v, float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DomainError("projection onto the sphere is undefined at 0")
    return v / norm


# --------------------------------------------------------------------------
# vector fields


@dataclass(frozen=True, eq=False)
class VectorField:
    """Samples of ``u: R^n -> R^d`` on a grid plus exterior data.

    ``flags`` marks nodes whose value is a placeholder (for instance the
    singular node of the vortex). Flagged nodes are skipped by sup-norm scans
    and by energy quadratures.
    """

    spec: GridSpec
    values: np.ndarray
    exterior: Optional[Exterior] = None
    flags: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        if vals.shape[:-1] != self.spec.counts:
            if vals.shape == self.spec.counts:
                vals = vals[..., None]
            else:
                raise ValueError(f"values shape {vals.shape} does not match grid {self.spec.counts}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        flags = np.zeros(self.spec.counts, bool) if self.flags is None else np.asarray(self.flags, bool)
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @property
    def n(self) -> int:
        return self.spec.n

    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1, self.d)

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return bool(np.all(np.abs(np.linalg.norm(self.values, axis=-1) - 1.0) <= tol))

    def with_values(self, values, flags=None) -> "VectorField":
        return VectorField(self.spec, values, self.exterior,
                           self.flags if flags is None else flags)

    def sample(self, pts) -> np.ndarray:
        """Evaluate the field at arbitrary points.

        Multilinear interpolation inside the node box, exterior descriptor
        outside it.
        """
        pts = np.atleast_2d(np.asarray(pts, float))
        inside = self.spec.contains(pts)
        out = np.empty((pts.shape[0], self.d))
        if inside.any():
            idx = ((pts[inside] - self.spec.lower) / self.spec.h).T
            for c in range(self.d):
                out[inside, c] = ndimage.map_coordinates(
                    self.values[..., c], idx, order=1, mode="nearest")
        if (~inside).any():
            if self.exterior is None:
                raise DomainError("sample point outside the grid and no exterior data")
            out[~inside] = self.exterior(pts[~inside])
        return out


def constant_field(spec: GridSpec, c) -> VectorField:
    c = np.atleast_1d(np.asarray(c, float))
    vals = np.broadcast_to(c, spec.counts + (c.size,)).copy()
    return VectorField(spec, vals, ConstantExterior(c))


def analytic_vortex(spec: GridSpec) -> VectorField:
    """The map ``x / |x|`` sampled on a planar grid.

    A node sitting exactly at the origin is flagged and holds the
    placeholder ``(1, 0)``; the exterior descriptor is the analytic vortex.
    """
    if spec.n != 2:
        raise ValueError("the vortex needs n = d = 2")
    x = spec.coords()
    vals = vortex_values(x)
    flags = np.zeros(spec.counts, bool)
    near = spec.index_of(np.zeros(2))
    if np.linalg.norm(x[near]) <= 1e-9 * spec.h:
        flags[near] = True
        vals[near] = (1.0, 0.0)
    return VectorField(spec, vals, VortexExterior(), flags)


def rescale_field(u: VectorField, x0, r: float) -> VectorField:
    """Return ``y -> u(x0 + r y)`` resampled on ``u``'s grid."""
    if not r > 0:
        raise ValueError("r must be positive")
    pts = np.asarray(x0, float) + r * u.spec.points()
    vals = u.sample(pts).reshape(u.spec.counts + (u.d,))
    flags = np.zeros(u.spec.counts, bool)
    if u.flags.any():
        # a flagged source node maps to the target node nearest its preimage
        for p in u.spec.points()[u.flags.ravel()]:
            y = (p - np.asarray(x0, float)) / r
            if u.spec.contains(y[None])[0]:
                flags[u.spec.index_of(y)] = True
    ext = u.exterior
    if ext is not None and not isinstance(ext, (ConstantExterior, VortexExterior)):
        f = ext
        ext = FunctionExterior(lambda p: f(np.asarray(x0, float) + r * p), f.name,
                               f.far_mean, f.far_mean_square, f.max_cell / r)
    elif isinstance(ext, VortexExterior) and np.any(np.asarray(x0, float) != 0):
        shift = np.asarray(x0, float)
        ext = FunctionExterior(lambda p: vortex_values(shift + r * p), "vortex-shifted",
                               np.zeros(2), 1.0)
    return VectorField(u.spec, vals, ext, flags)


def gradient(u: VectorField) -> np.ndarray:
    """Finite-difference Jacobian, shape ``counts + (n, d)``.

    Centered differences in the interior and first-order one-sided
    differences on the faces; exact for affine fields.
    """
    h = u.spec.h
    grads = [np.gradient(u.values[..., c], h, edge_order=1) for c in range(u.d)]
    if u.n == 1:
        grads = [[g] for g in grads]
    # grads[c][i] = d u_c / d x_i
    return np.stack([np.stack(g, axis=-1) for g in grads], axis=-1)


def gradient_norm(u: VectorField) -> np.ndarray:
    """Frobenius norm of the finite-difference Jacobian at every node."""
    g = gradient(u)
    return np.sqrt(np.sum(g * g, axis=(-2, -1)))
