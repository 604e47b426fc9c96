"""Boundary k-symmetric fits, quantitative strata and scale/volume estimators.

A function on the upper half-space is boundary k-symmetric about a boundary
point when it is invariant under dilations about that point and under
translations along a k-dimensional subspace ``V`` of the boundary. Such a
function depends only on the direction of the component orthogonal to ``V``,
i.e. on a point of the hemisphere ``S^{n-k}_+``. We parametrize that
hemisphere by nested angles

    phi_i = atan2(c_i, |(c_{i+1}, ..., c_{m+1})|),   i = 1..m = n - k,

where ``c = (W^T (y - x), z)`` and ``W`` completes ``V`` to an orthonormal
frame ``Q = [V, W]``. Dropping ``phi_1`` gives exactly the angles of the
``(k+1)``-quotient for the frame ``Q`` with one more symmetric column, so
approximation spaces are nested along a fixed frame.

The approximation space is piecewise linear in the angles on a product grid
of bins; the fit is the weighted least-squares projection onto it, using the
same covered-volume weights as the half-ball energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.linalg import null_space

from .extension import HalfField, _ball_weights, directional_energy_matrix
from .fields import ConstantExterior, DomainError, VectorField, VortexExterior, gradient_norm

DEFAULT_BINS = 24
FRAME_TOL = 1e-10
SLOPE_CUTOFF = 1e-6


@dataclass
class SymmetryFit:
    """Best boundary k-symmetric approximant on one half-ball.

    ``defect`` is the mean-square deviation ``sum w |u - h|^2 / sum w`` over
    the half-ball; ``relative_defect`` divides it by the mean-square
    oscillation of ``u^e`` about its mean on the same half-ball.
    """

    k: int
    center: tuple
    radius: float
    frame: np.ndarray  # full orthonormal n x n; first k columns span V
    defect: float
    relative_defect: float
    bins: int
    coeffs: np.ndarray = field(repr=False, default=None)
    fitted: np.ndarray = field(repr=False, default=None)
    region: tuple = field(repr=False, default=None)

    @property
    def V(self) -> np.ndarray:
        return self.frame[:, :self.k]

    def apply_to(self, ue: HalfField) -> HalfField:
        """Copy of ``ue`` with the fitted values on the half-ball cells."""
        vals = np.array(ue.values)
        sl, inside = self.region
        block = vals[sl]
        block[inside] = self.fitted[inside]
        vals[sl] = block
        return HalfField(ue.spec, vals, ue.grad)


def complete_frame(V, n: int) -> np.ndarray:
    """Orthonormal ``n x n`` frame whose first columns are ``V``.

    Raises
    ------
    ValueError
        If ``V`` is not orthonormal.
    """
    V = np.asarray(V, float).reshape(n, -1) if np.size(V) else np.zeros((n, 0))
    k = V.shape[1]
    if k > n:
        raise ValueError("more frame vectors than dimensions")
    if k and not np.allclose(V.T @ V, np.eye(k), atol=FRAME_TOL):
        raise ValueError("degenerate frame: columns must be orthonormal")
    if k == n:
        return V.copy()
    W = null_space(V.T) if k else np.eye(n)
    return np.hstack([V, W])


def link_angles(rel: np.ndarray, z: np.ndarray, frame: np.ndarray, k: int) -> np.ndarray:
    """Nested angles of the quotient point, shape ``(..., n - k)``."""
    n = frame.shape[0]
    m = n - k
    c = np.concatenate([rel @ frame[:, k:], z[..., None]], axis=-1)
    tail = np.sqrt(np.cumsum((c * c)[..., ::-1], axis=-1)[..., ::-1])  # |c_i..c_{m+1}|
    ang = np.empty(c.shape[:-1] + (m,))
    for i in range(m):
        ang[..., i] = np.arctan2(c[..., i], tail[..., i + 1])
    return ang


def _fit(vals, w, ang, nb):
    """Weighted piecewise-linear least squares in the angles; returns fitted values and coeffs."""
    npts, d = vals.shape
    m = ang.shape[1]
    if m == 0:
        tot = w.sum()
        mean = (w @ vals) / tot if tot > 0 else np.zeros(d)
        return np.broadcast_to(mean, vals.shape).copy(), mean[None, None, :]
    width = np.pi / nb
    idx = np.clip(np.floor((ang + np.pi / 2) / width).astype(int), 0, nb - 1)
    t = (ang + np.pi / 2) / width - idx - 0.5
    bid = np.ravel_multi_index(tuple(idx.T), (nb,) * m)
    nbins = nb ** m
    W = np.bincount(bid, w, nbins)
    Ws = np.where(W > 0, W, 1.0)
    tbar = np.stack([np.bincount(bid, w * t[:, a], nbins) for a in range(m)], 1) / Ws[:, None]
    vbar = np.stack([np.bincount(bid, w * vals[:, c], nbins) for c in range(d)], 1) / Ws[:, None]
    tc = t - tbar[bid]
    C = np.empty((nbins, m, m))
    X = np.empty((nbins, m, d))
    for a in range(m):
        for b in range(a, m):
            C[:, a, b] = C[:, b, a] = np.bincount(bid, w * tc[:, a] * tc[:, b], nbins)
        for c in range(d):
            X[:, a, c] = np.bincount(bid, w * tc[:, a] * vals[:, c], nbins)
    # slopes live on the well-resolved directions of each bin's centred second moment;
    # the cutoff is relative to a uniform spread over the bin so that the projection
    # stays idempotent to rounding
    lam, vec = np.linalg.eigh(C)
    keep = lam > SLOPE_CUTOFF * W[:, None] / 12
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    slopes = np.einsum("kae,ke,kbe,kbd->kad", vec, inv, vec, X)
    fitted = vbar[bid] + np.einsum("na,nad->nd", tc, slopes[bid])
    coeffs = np.concatenate([(vbar - np.einsum("ka,kad->kd", tbar, slopes))[:, None, :], slopes], 1)
    return fitted, coeffs


class _Ball:
    """Cells of one half-ball with weights, values and offsets."""

    def __init__(self, ue: HalfField, x, r):
        sl, pts, (w,) = _ball_weights(ue, x, [r])
        inside = w > 0
        self.sl = sl
        self.inside = inside
        self.w = w[inside]
        self.vals = ue.values[sl][inside]
        p = pts[inside]
        n = ue.spec.n
        self.rel = p[:, :n] - np.asarray(x, float)
        self.z = p[:, n]
        tot = self.w.sum()
        mean = (self.w @ self.vals) / tot
        self.osc = float(self.w @ np.sum((self.vals - mean) ** 2, axis=1)) / tot
        self.total = float(tot)
        self.shape = w.shape

    def evaluate(self, frame, k, nb):
        ang = link_angles(self.rel, self.z, frame, k)
        fitted, coeffs = _fit(self.vals, self.w, ang, nb)
        defect = float(self.w @ np.sum((self.vals - fitted) ** 2, axis=1)) / self.total
        return defect, fitted, coeffs


def _make_fit(ball: _Ball, x, r, frame, k, nb, defect, fitted, coeffs, d):
    full = np.zeros(ball.shape + (d,))
    full[ball.inside] = fitted
    rel = defect / ball.osc if ball.osc > 0 else 0.0
    return SymmetryFit(k, tuple(np.asarray(x, float)), float(r), frame, defect, rel, nb,
                       coeffs, full, (ball.sl, ball.inside))


def symmetrize(ue: HalfField, x, r: float, V, k: Optional[int] = None,
               bins: int = DEFAULT_BINS) -> SymmetryFit:
    """Best approximant invariant under dilations about ``(x, 0)`` and translations along ``V``.

    ``V`` is either an ``n x k`` orthonormal frame or a full ``n x n``
    orthonormal frame together with ``k``; in the latter case the column
    order fixes the angle parametrization of the quotient.
    """
    n = ue.spec.n
    V = np.asarray(V, float)
    if k is None:
        k = 0 if V.size == 0 else V.reshape(n, -1).shape[1]
        frame = complete_frame(V, n)
    else:
        frame = complete_frame(V, n) if V.shape != (n, n) else V
        if not np.allclose(frame.T @ frame, np.eye(n), atol=FRAME_TOL):
            raise ValueError("degenerate frame: columns must be orthonormal")
    ball = _Ball(ue, x, r)
    defect, fitted, coeffs = ball.evaluate(frame, k, bins)
    return _make_fit(ball, x, r, frame, k, bins, defect, fitted, coeffs, ue.d)


# --------------------------------------------------------------------------
# subspace search


def _givens(frame, i, j, a):
    out = frame.copy()
    c, s = np.cos(a), np.sin(a)
    out[:, i] = c * frame[:, i] + s * frame[:, j]
    out[:, j] = -s * frame[:, i] + c * frame[:, j]
    return out


def _candidate_frames(ue, x, r, k, n, grid):
    cands = []
    de = directional_energy_matrix(ue, x, r)
    cands.append(de.eigenvectors.copy())  # ascending: least energy first
    if grid and n == 2:
        for th in np.linspace(0, np.pi, 16, endpoint=False):
            cands.append(np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]))
    elif grid and n == 3:
        for th in np.linspace(0, np.pi / 2, 5):
            for ph in np.linspace(0, 2 * np.pi, max(1, int(round(8 * np.sin(th)))) + 1)[:-1]:
                v = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
                f = complete_frame(v[:, None], 3)
                if k == 2:
                    f = f[:, [1, 2, 0]]
                cands.append(f)
    return cands


def symmetry_defect(ue: HalfField, x, r: float, k: int, bins: int = DEFAULT_BINS,
                    seeds: Sequence[np.ndarray] = (), grid: bool = True,
                    refine: bool = True, ball: Optional[_Ball] = None) -> SymmetryFit:
    """Minimize the symmetrization defect over k-dimensional boundary subspaces.

    Candidates are the eigenframe of the directional energy matrix (least
    energetic directions first), a coarse grid of directions for ``n <= 3``
    and any ``seeds`` (full frames). The best candidate is refined by
    Givens rotations that mix symmetric and non-symmetric columns. Ties keep
    the earliest candidate.
    """
    n = ue.spec.n
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    ball = ball or _Ball(ue, x, r)
    if k == 0 or k == n:
        frame = np.eye(n)
        defect, fitted, coeffs = ball.evaluate(frame, k, bins)
        return _make_fit(ball, x, r, frame, k, bins, defect, fitted, coeffs, ue.d)
    cands = list(seeds) + _candidate_frames(ue, x, r, k, n, grid)
    best = None
    for f in cands:
        res = ball.evaluate(f, k, bins)
        if best is None or res[0] < best[1][0]:
            best = (f, res)
    frame, res = best
    if refine:
        step = np.pi / 32
        while step > 1e-3:
            improved = False
            for i in range(k):
                for j in range(k, n):
                    for a in (step, -step):
                        f = _givens(frame, i, j, a)
                        trial = ball.evaluate(f, k, bins)
                        if trial[0] < res[0]:
                            frame, res, improved = f, trial, True
                            break
            if not improved:
                step /= 2
    return _make_fit(ball, x, r, frame, k, bins, *res, ue.d)


def defect_profile(ue: HalfField, x, r: float, bins: int = DEFAULT_BINS,
                   grid: bool = True, refine: bool = True) -> list:
    """Optimized fits for every ``k = 0..n`` with ``defect_k <= defect_{k+1}``.

    The search for ``k`` is seeded with the best ``(k+1)``-frame; since the
    approximation spaces along one frame are nested, the ``(k+1)``-fit is a
    k-symmetric competitor, and it is kept when it wins.
    """
    n = ue.spec.n
    ball = _Ball(ue, x, r)
    fits = [None] * (n + 1)
    fits[n] = symmetry_defect(ue, x, r, n, bins, ball=ball)
    for k in range(n - 1, -1, -1):
        up = fits[k + 1]
        fit = symmetry_defect(ue, x, r, k, bins, seeds=[up.frame], grid=grid,
                              refine=refine, ball=ball)
        if up.defect < fit.defect:
            fit = SymmetryFit(k, up.center, up.radius, up.frame, up.defect, up.relative_defect,
                              up.bins, up.coeffs, up.fitted, up.region)
        fits[k] = fit
    return fits


# --------------------------------------------------------------------------
# strata


@dataclass
class DefectTable:
    """Optimized defects ``defects[i, j, k]`` at point ``i``, scale ``j``, symmetry ``k``."""

    points: np.ndarray
    scales: np.ndarray
    defects: np.ndarray


def defect_table(ue: HalfField, points, scales, bins: int = 16, grid: bool = True,
                 refine: bool = False) -> DefectTable:
    points = np.atleast_2d(np.asarray(points, float))
    scales = np.asarray(sorted(scales), float)
    n = ue.spec.n
    out = np.empty((points.shape[0], scales.size, n + 1))
    for i, p in enumerate(points):
        for j, s in enumerate(scales):
            fits = defect_profile(ue, p, s, bins, grid, refine)
            out[i, j] = [f.defect for f in fits]
    return DefectTable(points, scales, out)


@dataclass
class Stratum:
    """Points not (k+1, eps)-symmetric at any scale of the schedule in ``[r, 1)``."""

    k: int
    eps: float
    r: float
    points: np.ndarray
    mask: np.ndarray
    witness_scale: np.ndarray
    witness_defect: np.ndarray

    @property
    def flagged(self) -> np.ndarray:
        return self.points[self.mask]


def quantitative_stratum(table: DefectTable, k: int, eps: float, r: float) -> Stratum:
    """Quantitative stratum from a defect table.

    A point is flagged iff the ``(k+1)``-defect exceeds ``eps`` at every
    tabulated scale ``s`` with ``r <= s < 1``. The witness is the scale where
    the defect came closest to ``eps`` and the defect there.
    """
    n = table.defects.shape[2] - 1
    if not 0 <= k < n:
        raise ValueError("k must lie in [0, n - 1]")
    use = (table.scales >= r) & (table.scales < 1)
    d = table.defects[:, use, k + 1]
    mask = np.all(d > eps, axis=1) if d.shape[1] else np.ones(len(table.points), bool)
    if d.shape[1]:
        j = np.argmin(d, axis=1)
        ws = table.scales[use][j]
        wd = d[np.arange(d.shape[0]), j]
    else:
        ws = np.full(len(table.points), np.nan)
        wd = np.full(len(table.points), np.nan)
    return Stratum(k, eps, r, table.points, mask, ws, wd)


# --------------------------------------------------------------------------
# effective span


@dataclass
class Span:
    dim: int
    origin: np.ndarray
    basis: np.ndarray  # (dim, n) orthonormal rows
    chosen: list


def _dist_to_span(pts, origin, basis):
    rel = pts - origin
    if basis.shape[0]:
        rel = rel - (rel @ basis.T) @ basis
    return np.linalg.norm(rel, axis=1)


def effective_span(points, rho: float) -> Span:
    """Greedy effective span at scale ``rho``.

    Starting from the first point, repeatedly add the point farthest from the
    current affine span while that distance is at least ``2 rho``.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    if pts.shape[0] == 0 or pts.size == 0:
        raise ValueError("effective span of an empty set")
    if not rho > 0:
        raise ValueError("rho must be positive")
    n = pts.shape[1]
    origin = pts[0]
    basis = np.zeros((0, n))
    chosen = [0]
    while basis.shape[0] < n:
        dist = _dist_to_span(pts, origin, basis)
        i = int(np.argmax(dist))
        if dist[i] < 2 * rho:
            break
        v = pts[i] - origin
        if basis.shape[0]:
            v = v - (v @ basis.T) @ basis
        basis = np.vstack([basis, v / np.linalg.norm(v)])
        chosen.append(i)
    return Span(basis.shape[0], origin, basis, chosen)


# --------------------------------------------------------------------------
# regularity scale and volumes


def _grad_nodes(u: VectorField):
    g = gradient_norm(u)
    ok = ~u.flags
    return u.spec.points()[ok.ravel()], g[ok]


def regularity_scale(u: VectorField, x, grad: Optional[np.ndarray] = None) -> float:
    """``max {r <= 1 : r sup_{D_r(x)} |grad u| <= 1}`` over non-flagged nodes.

    The predicate is monotone in ``r``, so the maximum equals
    ``min(1, min_y max(|y - x|, 1/|grad u(y)|))``. Where ``D_1(x)`` leaves
    the grid, the vortex descriptor contributes its analytic gradient
    ``1/|y|`` and a constant descriptor contributes nothing; other
    descriptors require the disc to be covered by the grid.
    """
    x = np.asarray(x, float)
    pts, g = _grad_nodes(u) if grad is None else (u.spec.points()[~u.flags.ravel()],
                                                    np.asarray(grad)[~u.flags])
    d = np.linalg.norm(pts - x, axis=1)
    near = d <= 1.0
    with np.errstate(divide="ignore"):
        cand = np.maximum(d[near], 1.0 / g[near])
    best = float(min(1.0, cand.min(initial=1.0)))
    if not u.spec.contains(x[None], pad=1.0)[0]:
        if isinstance(u.exterior, VortexExterior):
            # the analytic sup over D_r(x) is 1 / (|x| - r) once the disc misses 0
            ax = float(np.linalg.norm(x))
            best = min(best, ax / 2 if ax / 2 < 1 else 1.0)
        elif not isinstance(u.exterior, ConstantExterior):
            raise DomainError("D_1(x) not covered by the grid")
    return best


def _window_mask(u: VectorField, window) -> np.ndarray:
    from .energy import Ball

    window = window or Ball(np.zeros(u.n), 1.0)
    return window.contains(u.spec.coords())


def regularity_sublevel_volume(u: VectorField, r: float, window=None) -> float:
    """``Vol({r_u < r} cap window)``: nodes within distance ``r`` of ``{|grad u| > 1/r}``."""
    if r < u.spec.h:
        raise ValueError("r must be at least the grid spacing")
    g = gradient_norm(u)
    seeds = (g > 1.0 / r) & ~u.flags
    dist = ndimage.distance_transform_edt(~seeds, sampling=u.spec.h)
    sel = (dist < r) & _window_mask(u, window)
    return float(np.count_nonzero(sel)) * u.spec.cell_volume


def tube_volume(u_or_spec, S: np.ndarray, r: float, window=None) -> float:
    """``h^n * #{nodes in window within distance r of S}``."""
    spec = getattr(u_or_spec, "spec", u_or_spec)
    if r < spec.h:
        raise ValueError("r must be at least the grid spacing")
    S = np.asarray(S, bool)
    if not S.any():
        return 0.0
    dist = ndimage.distance_transform_edt(~S, sampling=spec.h)
    from .energy import Ball

    window = window or Ball(np.zeros(spec.n), 1.0)
    sel = (dist <= r) & window.contains(spec.coords())
    return float(np.count_nonzero(sel)) * spec.cell_volume


def gradient_superlevel_volume(u: VectorField, r: float, window=None) -> float:
    """``h^n * #{non-flagged nodes in window with |grad u| > 1/r}``."""
    if r < u.spec.h:
        raise ValueError("r must be at least the grid spacing")
    g = gradient_norm(u)
    sel = (g > 1.0 / r) & ~u.flags & _window_mask(u, window)
    return float(np.count_nonzero(sel)) * u.spec.cell_volume


def singular_candidates(ue: HalfField, eps1: float, r: float) -> np.ndarray:
    """Base nodes where ``Theta(u^e, x, r) > eps1`` (NaN centres are not flagged)."""
    from .extension import theta_field

    if not eps1 > 0:
        raise ValueError("eps1 must be positive")
    T = theta_field(ue, r)
    return np.nan_to_num(T, nan=-np.inf) > eps1
