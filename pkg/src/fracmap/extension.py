"""Poisson extension to the upper half-space and half-ball densities.

The extension of grid data is computed cell by cell: every grid cell carries
the constant value of its node and the Poisson kernel (and its derivatives)
is integrated exactly over the cell, in closed form for ``n <= 2``. The part
of ``R^n`` beyond the grid box is integrated against the exterior descriptor
on dyadic shells, and whatever kernel mass is left past the last shell is
assigned to the descriptor's far mean, so the weights at every node sum to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .fields import DomainError, GridSpec, VectorField
from .quadrature import (Correlator, ball_cell_fractions,
                         exterior_shells, gamma_n, smooth_on_nodes)


class ResolutionError(ValueError):
    """Requested radii are too small for the half-grid."""


@dataclass(frozen=True)
class HalfGridSpec:
    """Nodes ``(x, z)`` with ``x`` on a planar grid and ``z`` on given levels.

    ``base`` must be aligned with the grid of the field being extended.
    ``z`` is increasing and positive; each level owns the cell between the
    midpoints to its neighbours, the first cell starting at ``z = 0``.
    """

    base: GridSpec
    z: tuple

    def __post_init__(self):
        z = tuple(float(v) for v in np.atleast_1d(self.z))
        object.__setattr__(self, "z", z)
        za = np.asarray(z)
        if za.size < 2 or np.any(za <= 0) or np.any(np.diff(za) <= 0):
            raise ValueError("z levels must be positive and strictly increasing")

    @classmethod
    def uniform(cls, u_spec: GridSpec, half_width: float, z_max: float, center=None,
                dz: Optional[float] = None) -> "HalfGridSpec":
        """Window of ``u_spec`` nodes within ``half_width`` of ``center``; levels ``(k+1/2) dz``."""
        h = u_spec.h
        c = np.zeros(u_spec.n) if center is None else np.asarray(center, float)
        lo = np.ceil((c - half_width - u_spec.lower) / h - 1e-9).astype(int)
        hi = np.floor((c + half_width - u_spec.lower) / h + 1e-9).astype(int)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, np.asarray(u_spec.counts) - 1)
        base = GridSpec(tuple(u_spec.lower + lo * h), h, tuple(hi - lo + 1))
        dz = h if dz is None else dz
        nz = int(np.ceil(z_max / dz - 0.5 - 1e-9)) + 1
        return cls(base, tuple(dz * (np.arange(nz) + 0.5)))

    @classmethod
    def geometric(cls, u_spec: GridSpec, half_width: float, z_max: float, center=None,
                  ratio: float = 1.25) -> "HalfGridSpec":
        """Window as in :meth:`uniform`; levels ``h/2 * ratio^k`` up to ``z_max``."""
        if not ratio > 1:
            raise ValueError("ratio must exceed 1")
        uni = cls.uniform(u_spec, half_width, z_max, center)
        nz = int(np.ceil(np.log(2 * z_max / u_spec.h) / np.log(ratio))) + 1
        return cls(uni.base, tuple(0.5 * u_spec.h * ratio ** np.arange(nz)))

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def z_faces(self) -> np.ndarray:
        z = np.asarray(self.z)
        mids = 0.5 * (z[1:] + z[:-1])
        return np.concatenate([[0.0], mids, [z[-1] + (z[-1] - mids[-1])]])

    @property
    def dz(self) -> np.ndarray:
        return np.diff(self.z_faces)

    def spacing_at(self, z: float) -> float:
        """Vertical cell size at height ``z``."""
        k = int(np.clip(np.searchsorted(self.z_faces, z) - 1, 0, len(self.z) - 1))
        return float(self.dz[k])


@dataclass(frozen=True, eq=False)
class HalfField:
    """Values and gradient of an extension on a :class:`HalfGridSpec`.

    ``values`` has shape ``base.counts + (nz, d)`` and ``grad`` has shape
    ``base.counts + (nz, n + 1, d)`` with the vertical derivative last.
    """

    spec: HalfGridSpec
    values: np.ndarray
    grad: np.ndarray

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    def grad_sq(self) -> np.ndarray:
        return np.sum(self.grad ** 2, axis=(-2, -1))

    def sample(self, pts) -> np.ndarray:
        """Multilinear interpolation at points ``(M, n + 1)`` inside the node box."""
        pts = np.atleast_2d(np.asarray(pts, float))
        n = self.spec.n
        b = self.spec.base
        z = np.asarray(self.spec.z)
        xi = (pts[:, :n] - b.lower) / b.h
        zi = np.interp(pts[:, n], z, np.arange(z.size), left=np.nan, right=np.nan)
        inside = b.contains(pts[:, :n]) & np.isfinite(zi)
        if not inside.all():
            raise DomainError("sample point outside the half-grid")
        coords = np.vstack([xi.T, zi[None]])
        return np.stack([ndimage.map_coordinates(self.values[..., c], coords, order=1)
                         for c in range(self.d)], axis=-1)


# --------------------------------------------------------------------------
# cell-integrated Poisson kernels


def _cell_kernels_1d(off, h, z):
    a1 = off[..., 0] - h / 2
    a2 = off[..., 0] + h / 2
    w = (np.arctan(a2 / z) - np.arctan(a1 / z)) / np.pi
    p = lambda a: z / (a * a + z * z) / np.pi
    dx = -(p(a2) - p(a1))
    dz = (-a2 / (a2 * a2 + z * z) + a1 / (a1 * a1 + z * z)) / np.pi
    return w, [dx], dz


def _cell_kernels_2d(off, h, z):
    a1, a2 = off[..., 0] - h / 2, off[..., 0] + h / 2
    b1, b2 = off[..., 1] - h / 2, off[..., 1] + h / 2
    z2 = z * z
    g = 1.0 / (2 * np.pi)

    def F(a, b):
        return g * np.arctan(a * b / (z * np.sqrt(a * a + b * b + z2)))

    def G(a, t1, t2):
        # int_{t1}^{t2} P(a, t, z) dt
        s = a * a + z2
        return g * z * (t2 / (s * np.sqrt(s + t2 * t2)) - t1 / (s * np.sqrt(s + t1 * t1)))

    def Fz(a, b):
        q = np.sqrt(a * a + b * b + z2)
        return -g * a * b * (a * a + b * b + 2 * z2) / (q * (a * a + z2) * (b * b + z2))

    w = F(a2, b2) - F(a1, b2) - F(a2, b1) + F(a1, b1)
    dx = -(G(a2, b1, b2) - G(a1, b1, b2))
    dy = -(G(b2, a1, a2) - G(b1, a1, a2))
    dz = Fz(a2, b2) - Fz(a1, b2) - Fz(a2, b1) + Fz(a1, b1)
    return w, [dx, dy], dz


def _inv_power(r2, m):
    """``r2 ** (-m / 2)`` for a positive integer ``m`` using products only."""
    inv2 = 1.0 / r2
    out = inv2 if m >= 2 else None
    for _ in range(m // 2 - 1):
        out = out * inv2
    if m % 2:
        half = np.sqrt(inv2)
        out = half if out is None else out * half
    return out


def _point_kernels(diff, z, n):
    """Poisson kernel and its target derivatives at offsets ``diff = y - x``."""
    g = gamma_n(n)
    r2 = np.einsum("...i,...i->...", diff, diff) + z * z
    base = g * _inv_power(r2, n + 1)  # g / r^{n+1}
    q = (n + 1) * z * base / r2
    p = z * base
    dxs = [q * diff[..., i] for i in range(n)]  # d/dx_i of P(x - y) = (n+1) g z (y-x)_i / r^{n+3}
    dz = base - z * q
    return p, dxs, dz


def _cell_kernels_quad(off, h, z, n, order=3):
    gx, gw = np.polynomial.legendre.leggauss(order)
    pts = np.stack(np.meshgrid(*[gx * h / 2] * n, indexing="ij"), -1).reshape(-1, n)
    wts = np.prod(np.stack(np.meshgrid(*[gw / 2] * n, indexing="ij"), -1).reshape(-1, n), axis=1)
    w = 0.0
    dxs = [0.0] * n
    dz = 0.0
    for p, wt in zip(pts, wts):
        k, kx, kz = _point_kernels(off + p, z, n)
        w = w + wt * k
        dxs = [a + wt * b for a, b in zip(dxs, kx)]
        dz = dz + wt * kz
    return w, dxs, dz


def cell_kernels(off: np.ndarray, h: float, z: float):
    """Cell averages times cell volume of ``P``, ``d_x P`` and ``d_z P``.

    ``off`` are source-minus-target offsets of cell centres, shape ``(..., n)``.
    Returns ``(w, [dx_1..dx_n], dz)``.
    """
    n = off.shape[-1]
    if n == 1:
        return _cell_kernels_1d(off, h, z)
    if n == 2:
        return _cell_kernels_2d(off, h, z)
    return _cell_kernels_quad(off, h, z, n)


def poisson_extend(u: VectorField, hspec: HalfGridSpec, shell_levels: int = 12) -> HalfField:
    """Poisson extension of ``u`` and its gradient on a half-grid.

    Raises
    ------
    ValueError
        If ``u`` has no exterior descriptor or the grids are not aligned.
    """
    if u.exterior is None:
        raise ValueError("the extension integrates over R^n: exterior data required")
    base = hspec.base
    if not u.spec.is_aligned_with(base):
        raise ValueError("half-grid base must be aligned with the field grid")
    n, d, h = u.n, u.d, u.spec.h
    off0 = base.offset_in(u.spec)
    corr = Correlator(u.spec.counts, base.counts, off0, h)
    offs = corr.offsets()
    vals = np.asarray(u.values)
    src_fft = [corr.source_fft(vals[..., c]) for c in range(d)]
    ones_fft = corr.source_fft(np.ones(u.spec.counts))

    # exterior shells beyond the u box
    lo = u.spec.lower - h / 2
    hi = u.spec.upper + h / 2
    spts, swts, _, slev = exterior_shells(lo, hi, levels=shell_levels,
                                          max_cell=u.exterior.max_cell, return_levels=True)
    svals = np.column_stack([np.ones(len(swts)), u.exterior(spts)])
    gap = float(np.min(np.minimum(base.lower - lo, hi - base.upper)))
    far_mean = u.exterior.far_mean
    nz = len(hspec.z)

    zs = np.asarray(hspec.z)
    tails = np.zeros(base.counts + (nz, n + 2, d + 1))
    for lev in range(shell_levels):
        sel = slev == lev
        # distance from the window to the inner face of this shell
        dist = gap + (2.0 ** lev - 1) * float(np.min(0.5 * (hi - lo)))
        tails += _tail_table(spts[sel], swts[sel], svals[sel], base, zs, n, d, max(dist, h))
    values = np.empty(base.counts + (nz, d))
    grad = np.empty(base.counts + (nz, n + 1, d))
    for k, z in enumerate(hspec.z):
        w, dxs, dz = cell_kernels(offs, h, z)
        box = []  # per kernel: (mass over the box, correlations per component)
        for kern in [w] + list(dxs) + [dz]:
            kf = corr.kernel_fft(kern)
            mass = corr.apply_fft(ones_fft, kf)
            comps = np.stack([corr.apply_fft(F, kf) for F in src_fft], axis=-1)
            box.append((mass, comps))
        t = tails[..., k, :, :]
        for j, (mass, comps) in enumerate(box):
            tot_mass = mass + t[..., j, 0]
            acc = comps + t[..., j, 1:]
            target_mass = 1.0 if j == 0 else 0.0
            if far_mean is not None:
                acc = acc + (target_mass - tot_mass)[..., None] * far_mean
            elif j == 0:
                acc = acc / tot_mass[..., None]
            if j == 0:
                values[..., k, :] = acc
            else:
                grad[..., k, j - 1, :] = acc
    return HalfField(hspec, values, grad)


def _tail_table(spts, swts, svals, base: GridSpec, z: np.ndarray, n: int, d: int,
                scale: float, ppw: int = 10) -> np.ndarray:
    """Kernel integrals over the exterior shells at every half-grid node.

    The result is harmonic and varies on the scale of the gap between the
    window and the shells, so it is evaluated on a coarse set of nodes and
    levels and interpolated. Shape ``counts + (nz, n + 2, d + 1)``: kernel
    (value, x-derivatives, z-derivative) by (mass, components).
    """
    from scipy.interpolate import CubicSpline, interp1d

    shape = base.counts + (z.size, n + 2, d + 1)
    if len(swts) == 0:
        return np.zeros(shape)
    # z levels: keep one per scale/ppw, always the first and last
    keep = [0]
    for k in range(1, z.size):
        if z[k] - z[keep[-1]] >= scale / ppw:
            keep.append(k)
    if keep[-1] != z.size - 1:
        keep.append(z.size - 1)
    mask = np.ones(base.counts, bool)
    step = max(1, 2 ** 20 // len(swts))
    wv = swts[:, None] * svals
    coarse = []
    for k in keep:
        def tail(targets, zz=z[k]):
            out = []
            for i in range(0, targets.shape[0], step):
                diff = spts[None, :, :] - targets[i:i + step, None, :]
                p, pxs, pz = _point_kernels(diff, zz, n)
                kk = np.stack([p] + pxs + [pz], axis=1)  # (T, n + 2, M)
                out.append((kk @ wv).reshape(kk.shape[0], -1))
            return np.concatenate(out)
        coarse.append(smooth_on_nodes(base.lower, base.h, base.counts, mask, tail, scale, ppw))
    coarse = np.stack(coarse, axis=1)  # (nodes, len(keep), (n+2)(d+1))
    if len(keep) == z.size:
        full = coarse
    elif len(keep) >= 3:
        full = CubicSpline(z[keep], coarse, axis=1)(z)
    else:
        full = interp1d(z[keep], coarse, axis=1)(z)
    return full.reshape(shape)


# --------------------------------------------------------------------------
# half-ball quadratures


def _cells(ue: HalfField, x0, r_out: float):
    """Candidate cells for a ball of radius ``r_out`` about ``(x0, 0)``."""
    spec = ue.spec
    b = spec.base
    x0 = np.asarray(x0, float)
    if np.any(x0 - r_out < b.lower - b.h / 2 - 1e-12) or np.any(x0 + r_out > b.upper + b.h / 2 + 1e-12):
        raise DomainError("half-ball exceeds the half-grid")
    if r_out > spec.z_faces[-1] + 1e-12:
        raise DomainError("half-ball exceeds the top of the half-grid")
    lo = np.maximum(np.floor((x0 - r_out - b.lower) / b.h).astype(int), 0)
    hi = np.minimum(np.ceil((x0 + r_out - b.lower) / b.h).astype(int), np.asarray(b.counts) - 1)
    kz = int(np.searchsorted(spec.z_faces, r_out)) + 1
    sl = tuple(slice(a, c + 1) for a, c in zip(lo, hi)) + (slice(0, min(kz, len(spec.z))),)
    axes = [b.lower[i] + b.h * np.arange(lo[i], hi[i] + 1) for i in range(b.n)]
    axes.append(np.asarray(spec.z)[sl[-1]])
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    cell = np.empty(pts.shape)
    cell[..., :b.n] = b.h
    cell[..., b.n] = spec.dz[sl[-1]]
    return sl, pts, cell


def _ball_weights(ue, x0, radii, sl_pts_cell=None):
    """Covered volume of every candidate cell for each radius."""
    sl, pts, cell = sl_pts_cell or _cells(ue, x0, max(radii))
    c = np.concatenate([np.asarray(x0, float), [0.0]])
    dist = lambda p: np.linalg.norm(p - c, axis=-1)
    flat_p = pts.reshape(-1, pts.shape[-1])
    flat_c = cell.reshape(-1, cell.shape[-1])
    vol = np.prod(flat_c, axis=1)
    out = [(ball_cell_fractions(dist, flat_p, flat_c, r) * vol).reshape(pts.shape[:-1])
           for r in radii]
    return sl, pts, out


def halfball_energy(ue: HalfField, x0, r: float) -> float:
    """``(1/2) int_{B_r^+(x0)} |grad u^e|^2`` by cellwise midpoint quadrature."""
    if not r > 0:
        raise ValueError("radius must be positive")
    sl, _, (w,) = _ball_weights(ue, x0, [r])
    return 0.5 * float(np.sum(w * ue.grad_sq()[sl]))


def theta_density(ue: HalfField, x0, r: float) -> float:
    return halfball_energy(ue, x0, r) / r ** (ue.spec.n - 1)


def theta_field(ue: HalfField, r: float) -> np.ndarray:
    """``Theta(u^e, x, r)`` at every base node; NaN where the half-ball leaves the grid.

    Uses the same cell weights as :func:`halfball_energy`; the weights depend
    only on the offset from the centre, so one FFT correlation per level
    evaluates all centres at once.
    """
    spec = ue.spec
    b = spec.base
    n = b.n
    if r > spec.z_faces[-1] + 1e-12:
        raise DomainError("radius exceeds the top of the half-grid")
    m = int(np.ceil(r / b.h))
    kcounts = (2 * m + 1,) * n
    # fractional weights of a ball centred at a node, on the (2m+1)^n stencil
    ax = b.h * np.arange(-m, m + 1)
    kz = int(np.searchsorted(spec.z_faces, r)) + 1
    kz = min(kz, len(spec.z))
    stencil_x = np.stack(np.meshgrid(*[ax] * n, indexing="ij"), -1)
    g2 = ue.grad_sq()
    out = np.zeros(b.counts)
    corr = Correlator(b.counts, b.counts, (0,) * n, b.h)
    offs = corr.offsets()
    dist_fn = lambda p: np.linalg.norm(p, axis=-1)
    for k in range(kz):
        pts = np.concatenate([stencil_x, np.full(kcounts + (1,), spec.z[k])], -1).reshape(-1, n + 1)
        cell = np.empty_like(pts)
        cell[:, :n] = b.h
        cell[:, n] = spec.dz[k]
        w = ball_cell_fractions(dist_fn, pts, cell, r) * np.prod(cell, axis=1)
        if not w.any():
            continue
        kern = np.zeros(offs.shape[:-1])
        idx = np.rint(offs / b.h).astype(int)
        inside = np.all(np.abs(idx) <= m, axis=-1)
        flat_w = w.reshape(kcounts)
        kern[inside] = flat_w[tuple((idx[inside] + m).T)]
        out += corr.apply(g2[..., k], corr.kernel_fft(kern))
    out *= 0.5 / r ** (n - 1)
    # centres whose ball is not covered by the window
    bad = np.zeros(b.counts, bool)
    for i in range(n):
        sl_lo = [slice(None)] * n
        sl_hi = [slice(None)] * n
        sl_lo[i] = slice(0, min(m, b.counts[i]))
        sl_hi[i] = slice(max(b.counts[i] - m, 0), None)
        bad[tuple(sl_lo)] = True
        bad[tuple(sl_hi)] = True
    out[bad] = np.nan
    return out


def _radial_integrand(ue, sl, pts, x0):
    n = ue.spec.n
    c = np.concatenate([np.asarray(x0, float), [0.0]])
    rel = pts - c
    dist = np.linalg.norm(rel, axis=-1)
    g = ue.grad[sl]
    radial = np.einsum("...i,...ic->...c", rel, g)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sum(radial ** 2, axis=-1) / dist ** (n + 1)
    return np.where(dist > 0, val, 0.0)


def annulus_radial_integral(ue: HalfField, x0, rho: float, r: float) -> float:
    """``int_{B_r^+ \\ B_rho^+} |(X - X0) . grad u^e|^2 / |X - X0|^{n+1}``."""
    if not 0 < rho < r:
        raise ValueError("need 0 < rho < r")
    sl, pts, (w_r, w_rho) = _ball_weights(ue, x0, [r, rho])
    f = _radial_integrand(ue, sl, pts, x0)
    return float(np.sum((w_r - w_rho) * f))


@dataclass
class DensityCurve:
    center: tuple
    radii: np.ndarray
    theta: np.ndarray
    xi: float = float("nan")
    xi_error: float = float("nan")

    def to_csv_rows(self):
        return [("r", "theta")] + [(float(r), float(t)) for r, t in zip(self.radii, self.theta)]


def density_curve(ue: HalfField, x0, radii: Sequence[float]) -> DensityCurve:
    radii = np.sort(np.asarray(radii, float))
    theta = np.array([theta_density(ue, x0, r) for r in radii])
    return DensityCurve(tuple(np.asarray(x0, float)), radii, theta)


def xi_density(ue: HalfField, x0, radii: Sequence[float]) -> DensityCurve:
    """Estimate ``lim_{r -> 0} Theta(r)`` from dyadic radii.

    The three smallest radii give the geometric increment ratio
    ``q = (Theta(4r) - Theta(2r)) / (Theta(2r) - Theta(r))``; for ``q > 1``
    the remaining geometric series is subtracted, otherwise the smallest
    value is kept. The error bar is the last increment.
    """
    radii = np.sort(np.asarray(radii, float))
    if radii.size < 3:
        raise ResolutionError("need at least three radii")
    if not np.allclose(radii[1:] / radii[:-1], 2.0, rtol=1e-9):
        raise ResolutionError("radii must be dyadic")
    for r in radii:
        if r < 4 * max(ue.spec.spacing_at(r), ue.spec.base.h):
            raise ResolutionError(f"radius {r:g} is below four grid spacings")
    curve = density_curve(ue, x0, radii)
    t = curve.theta
    d1 = t[1] - t[0]
    d2 = t[2] - t[1]
    est = t[0]
    if d1 != 0 and abs(d1) > 1e-300:
        q = d2 / d1
        if q > 1:
            est = t[0] - d1 / (q - 1)
    curve.xi = float(max(est, 0.0))
    curve.xi_error = float(abs(d1))
    return curve


@dataclass
class MonotonicityAudit:
    center: tuple
    rho: np.ndarray
    r: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    mismatch: np.ndarray
    floor: float

    def rows(self):
        return [("rho", "r", "lhs", "rhs", "mismatch")] + [
            tuple(float(v) for v in row)
            for row in zip(self.rho, self.r, self.lhs, self.rhs, self.mismatch)]


def monotonicity_audit(ue: HalfField, x0, pairs, floor: float = 1e-14) -> MonotonicityAudit:
    """Compare ``Theta(r) - Theta(rho)`` with the annulus radial-derivative integral."""
    rho, r, lhs, rhs, mis = [], [], [], [], []
    n = ue.spec.n
    for a, b in pairs:
        if not 0 < a < b:
            raise ValueError("pairs must satisfy 0 < rho < r")
        sl, pts, (w_b, w_a) = _ball_weights(ue, x0, [b, a])
        g2 = ue.grad_sq()[sl]
        t_b = 0.5 * float(np.sum(w_b * g2)) / b ** (n - 1)
        t_a = 0.5 * float(np.sum(w_a * g2)) / a ** (n - 1)
        right = float(np.sum((w_b - w_a) * _radial_integrand(ue, sl, pts, x0)))
        left = t_b - t_a
        rho.append(a)
        r.append(b)
        lhs.append(left)
        rhs.append(right)
        mis.append(abs(left - right) / max(abs(left), abs(right), floor))
    return MonotonicityAudit(tuple(np.asarray(x0, float)), np.array(rho), np.array(r),
                             np.array(lhs), np.array(rhs), np.array(mis), floor)


def pinching_w(ue: HalfField, x, r: float) -> float:
    """Radial-derivative integral over the annulus between radii ``r`` and ``8 r``."""
    return annulus_radial_integral(ue, x, r, 8 * r)


@dataclass
class DirectionalEnergy:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def subspace_energy(self, frame: np.ndarray) -> float:
        """``int |P grad u^e|^2`` for the subspace spanned by orthonormal columns."""
        frame = np.asarray(frame, float).reshape(self.matrix.shape[0], -1)
        return float(np.trace(frame.T @ self.matrix @ frame))


def directional_energy_matrix(ue: HalfField, x, r: float) -> DirectionalEnergy:
    """``A_ij = int_{B_r^+(x)} <d_i u^e, d_j u^e>`` over boundary directions."""
    n = ue.spec.n
    sl, _, (w,) = _ball_weights(ue, x, [r])
    g = ue.grad[sl][..., :n, :].reshape(-1, n, ue.d)
    A = np.einsum("p,pic,pjc->ij", w.reshape(-1), g, g)
    A = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(A)
    return DirectionalEnergy(A, vals, vecs)


@dataclass
class ComparisonResult:
    ratio: float
    extension_energy: float
    nonlocal_energy: float
    degenerate: bool = False


def extension_energy_comparison(u: VectorField, x, r: float, ue: HalfField = None) -> ComparisonResult:
    """Ratio of the half-ball extension energy to the nonlocal energy on ``D_{2r}(x)``.

    The disc ``D_{3r}(x)`` must lie inside the grid box.
    """
    from .energy import Ball, half_energy

    x = np.asarray(x, float)
    if not u.spec.contains(x[None], pad=3 * r)[0]:
        raise DomainError("D_3r(x) must lie inside the grid")
    if ue is None:
        hs = HalfGridSpec.uniform(u.spec, r + u.spec.h, r + u.spec.h, center=x)
        ue = poisson_extend(u, hs)
    top = halfball_energy(ue, x, r)
    bottom = half_energy(u, Ball(tuple(x), 2 * r)).value
    if bottom <= 0:
        return ComparisonResult(0.0, top, bottom, True)
    return ComparisonResult(top / bottom, top, bottom, False)
