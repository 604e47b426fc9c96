"""Shared quadrature machinery: FFT correlations, exterior shells, cell constants."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import integrate
from scipy.special import gamma

CHUNK = 2 ** 22  # max entries of a temporary pair-distance block


def gamma_n(n: int) -> float:
    """Normalisation ``pi^{-(n+1)/2} Gamma((n+1)/2)`` of the half-space Poisson kernel."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return float(np.pi ** (-(n + 1) / 2) * gamma((n + 1) / 2))


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere ``S^{n-1}`` in ``R^n``."""
    return float(2 * np.pi ** (n / 2) / gamma(n / 2))


# --------------------------------------------------------------------------
# FFT correlation restricted to a window


class Correlator:
    """Evaluate ``out[i] = sum_j f[j] * kern(x_j - y_i)`` with FFTs.

    ``x_j`` runs over a source grid and ``y_i`` over an aligned target window
    (same spacing, nodes coinciding). ``kern`` is sampled on the offsets
    ``(j - i - off) * h`` that can occur.
    """

    def __init__(self, src_counts, win_counts, win_offset, h):
        self.src = tuple(src_counts)
        self.win = tuple(win_counts)
        self.off = tuple(win_offset)
        self.h = h
        # offsets m = j - (i + off) range over [-(off + win - 1), src - 1 - off]
        self.m_lo = tuple(-(o + w - 1) for o, w in zip(self.off, self.win))
        self.m_hi = tuple(s - 1 - o for s, o in zip(self.src, self.off))
        self.klen = tuple(b - a + 1 for a, b in zip(self.m_lo, self.m_hi))
        self.fshape = tuple(sfft.next_fast_len(s + k - 1, real=True)
                            for s, k in zip(self.src, self.klen))

    def offsets(self) -> np.ndarray:
        """Offset vectors ``x_j - y_i`` in physical units, shape ``klen + (n,)``."""
        ax = [self.h * np.arange(a, b + 1) for a, b in zip(self.m_lo, self.m_hi)]
        return np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)

    def kernel_fft(self, kern: np.ndarray) -> np.ndarray:
        # correlation with kern == convolution with the reversed kernel
        rev = kern[tuple(slice(None, None, -1) for _ in kern.shape)]
        return sfft.rfftn(rev, self.fshape)

    def apply(self, f: np.ndarray, kfft: np.ndarray) -> np.ndarray:
        """Correlate one scalar source array with a transformed kernel."""
        full = sfft.irfftn(sfft.rfftn(f, self.fshape) * kfft, self.fshape)
        # conv index t = j + (m_hi - m) ; target i corresponds to m = j - i - off
        sl = tuple(slice(mh + o, mh + o + w) for mh, o, w in zip(self.m_hi, self.off, self.win))
        # reversed kernel index for offset m is (m_hi - m); conv output at
        # index t collects sum_j f[j] * rev[t - j] = kern[m_hi - t + j]
        # so m = j - (t - m_hi) -> i + off = t - m_hi
        return full[sl]

    def apply_fft(self, F: np.ndarray, kfft: np.ndarray) -> np.ndarray:
        """Same as :meth:`apply` with a pre-transformed source."""
        full = sfft.irfftn(F * kfft, self.fshape)
        sl = tuple(slice(mh + o, mh + o + w) for mh, o, w in zip(self.m_hi, self.off, self.win))
        return full[sl]

    def source_fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, self.fshape)


# --------------------------------------------------------------------------
# exterior shells


def exterior_shells(lower, upper, levels: int = 10, subdiv: int = 4, order: int = 3,
                    max_cell: float = np.inf, return_levels: bool = False):
    """Gauss points covering ``B_L \\ B_0`` for dyadically growing boxes.

    ``B_0`` is the cell-face box ``[lower, upper]``; box ``B_l`` is ``B_0``
    dilated by ``2^l`` about its center. Each shell ``B_{l+1} \\ B_l`` is cut
    into a ``4s``-per-axis lattice with the inner ``2s`` block removed.

    Returns
    -------
    pts, wts : arrays of shape ``(M, n)`` and ``(M,)``
    outer_half : half widths of the last box ``B_levels``
    level : shell index of every point, only with ``return_levels``
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    n = lower.size
    center = 0.5 * (lower + upper)
    half = 0.5 * (upper - lower)
    gx, gw = np.polynomial.legendre.leggauss(order)
    pts_all, wts_all, lev_all = [], [], []
    for lev in range(levels):
        hw = half * 2.0 ** (lev + 1)  # half widths of the outer box of this shell
        s = subdiv
        if np.isfinite(max_cell):
            # far shells carry kernel weight ~ 2^-l, so the refinement is capped;
            # the budget shrinks with n because every shell cell is evaluated
            # against every extension node
            s_cap = max(subdiv, int(4096 ** (1.0 / n) / 4 ** (n - 1)))
            s = min(max(s, int(np.ceil(np.max(hw) / (2 * max_cell)))), s_cap)
        m = 4 * s
        cell = 2 * hw / m
        idx = np.stack(np.meshgrid(*[np.arange(m)] * n, indexing="ij"), -1).reshape(-1, n)
        inner = np.all((idx >= s) & (idx < 3 * s), axis=1)
        idx = idx[~inner]
        lo = center - hw + idx * cell  # cell lower corners
        # tensor Gauss rule on the reference cell
        gp = np.stack(np.meshgrid(*[gx] * n, indexing="ij"), -1).reshape(-1, n)
        gwt = np.prod(np.stack(np.meshgrid(*[gw] * n, indexing="ij"), -1).reshape(-1, n), axis=1)
        p = lo[:, None, :] + (gp[None] + 1) / 2 * cell
        w = np.broadcast_to(gwt * np.prod(cell / 2), (lo.shape[0], gwt.size))
        pts_all.append(p.reshape(-1, n))
        wts_all.append(w.reshape(-1))
        lev_all.append(np.full(w.size, lev))
    out = (np.concatenate(pts_all), np.concatenate(wts_all), half * 2.0 ** levels)
    return out + (np.concatenate(lev_all),) if return_levels else out


def chunked_kernel_sums(targets: np.ndarray, sources: np.ndarray, weights: np.ndarray,
                        kernel, values=None) -> np.ndarray:
    """``out[i] = sum_j w_j kernel(targets_i - sources_j) [* values_j]``.

    ``kernel`` maps an array of difference vectors ``(..., n)`` to scalars.
    Without ``values`` the result has shape ``(T,)``; otherwise ``(T, d)``.
    """
    T = targets.shape[0]
    S = sources.shape[0]
    step = max(1, CHUNK // max(S, 1))
    out = np.zeros((T,) if values is None else (T, values.shape[1]))
    for a in range(0, T, step):
        diff = targets[a:a + step, None, :] - sources[None, :, :]
        k = kernel(diff) * weights
        out[a:a + step] = k.sum(axis=1) if values is None else k @ values
    return out


@lru_cache(maxsize=None)
def cube_tail_constant(n: int) -> float:
    """``int_{|y|_inf > 1} |y|^{-n-1} dy``; the tail outside a cube of half width a is this / a."""
    if n == 1:
        return 2.0
    if n == 2:
        return 4.0 * np.sqrt(2.0)
    if n == 3:
        # integral over S^2 of max_i |theta_i|, by octant symmetry
        f = lambda phi, th: max(abs(np.sin(th) * np.cos(phi)), abs(np.sin(th) * np.sin(phi)),
                                abs(np.cos(th))) * np.sin(th)
        val, _ = integrate.dblquad(f, 0, np.pi / 2, 0, np.pi / 2, epsabs=1e-11)
        return 8.0 * val
    raise NotImplementedError("cube tail constant only for n <= 3")


@lru_cache(maxsize=None)
def self_cell_constant(n: int) -> float:
    """``int_{[0,1]^n} int_{[0,1]^n} |s - t|^{1-n} ds dt``.

    Written as ``int_{[-1,1]^n} |w|^{1-n} prod_i (1 - |w_i|) dw``.
    """
    if n == 1:
        return 1.0
    if n == 2:
        # closed form of the mean inverse distance in the unit square, times 1
        return 4.0 / 3.0 * (1 - np.sqrt(2.0)) + 4.0 * np.log(1 + np.sqrt(2.0))
    if n == 3:
        f = lambda z, y, x: (1 - x) * (1 - y) * (1 - z) / (x * x + y * y + z * z)
        val, _ = integrate.tplquad(f, 0, 1, 0, 1, 0, 1, epsabs=1e-10)
        return 8.0 * val
    raise NotImplementedError("self-cell constant only for n <= 3")


def ball_cell_fractions(dist_fn, pts: np.ndarray, cell: np.ndarray, radius: float,
                        sub: int = 4) -> np.ndarray:
    """Fraction of each axis-aligned cell lying inside a ball.

    ``dist_fn`` maps points ``(..., m)`` to distance from the ball center;
    ``pts`` are cell centers and ``cell`` the per-point cell side lengths
    ``(N, m)``. Cells far from the sphere get exactly 0 or 1; cells cut by it
    are estimated with ``sub^m`` midpoint subsamples.
    """
    d = dist_fn(pts)
    halfdiag = 0.5 * np.linalg.norm(cell, axis=1)
    frac = (d + halfdiag <= radius).astype(float)
    cut = np.abs(d - radius) < halfdiag
    if cut.any():
        m = pts.shape[1]
        g = (np.arange(sub) + 0.5) / sub - 0.5
        off = np.stack(np.meshgrid(*[g] * m, indexing="ij"), -1).reshape(-1, m)
        sp = pts[cut][:, None, :] + off[None] * cell[cut][:, None, :]
        frac[cut] = np.mean(dist_fn(sp) <= radius, axis=1)
    return frac


def _lagrange4(t: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights for nodes ``-1, 0, 1, 2`` at offsets ``t in [0, 1)``."""
    return np.stack([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                     -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6], axis=-1)


def smooth_on_nodes(lower, h, counts, mask, func, scale: float, ppw: int = 10) -> np.ndarray:
    """Evaluate a smooth vector function at the masked nodes of a grid.

    ``func`` maps points ``(M, n)`` to values ``(M, k)``. It is evaluated on
    a coarsened copy of the grid (spacing about ``scale / ppw``) over the
    bounding box of ``mask`` and interpolated with local tensor-product
    cubics, which reproduce cubic polynomials exactly. ``scale`` is the
    length on which ``func`` varies, e.g. the distance to its
    singularities. Returns ``(mask.sum(), k)``.
    """
    lower = np.asarray(lower, float)
    idx = np.argwhere(mask)
    if idx.size == 0:
        return np.zeros((0, 0))
    n = len(counts)
    lo_i = idx.min(0)
    hi_i = idx.max(0)
    stride = max(1, min(int(scale / (ppw * h)), int(np.min(hi_i - lo_i)) // 4))
    if stride == 1:
        return func(lower + h * idx)
    # one coarse layer below and two above the bounding box feed the stencils
    ncoarse = (hi_i - lo_i) // stride + 1
    start = lo_i - stride
    axes = [start[i] + stride * np.arange(ncoarse[i] + 3) for i in range(n)]
    cgrid = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    vals = func(lower + h * cgrid.reshape(-1, n))
    vals = vals.reshape(cgrid.shape[:-1] + (vals.shape[-1],))
    pos = (idx - start) / stride
    base = np.floor(pos).astype(int)
    w = _lagrange4(pos - base)  # (M, n, 4)
    out = np.zeros((idx.shape[0], vals.shape[-1]))
    for off in np.ndindex(*(4,) * n):
        ii = tuple(base[:, a] + off[a] - 1 for a in range(n))
        wt = np.prod([w[:, a, off[a]] for a in range(n)], axis=0)
        out += wt[:, None] * vals[ii]
    return out
