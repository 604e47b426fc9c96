"""Nonlocal 1/2-Dirichlet energy, fractional Laplacian and a projected-descent minimizer.

All double integrals use the midpoint rule on grid cells. For ordered node
pairs ``(x, y)`` with ``x != y`` the kernel ``|x - y|^{-n-1}`` is sampled at
the nodes; the same-cell contribution is added separately for reporting.
Pairs with both nodes outside ``Omega`` never enter. Points beyond the grid
box are integrated against the exterior descriptor on dyadic shells, and the
remainder past the last shell is closed with the descriptor's far moments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fields import ConstantExterior, GridSpec, VectorField, project_to_sphere
from .quadrature import (Correlator, chunked_kernel_sums, cube_tail_constant,
                         exterior_shells, gamma_n, self_cell_constant,
                         smooth_on_nodes)

log = logging.getLogger(__name__)


class StagnationError(RuntimeError):
    """Backtracking collapsed; ``partial`` holds the last accepted iterate."""

    def __init__(self, msg, partial=None, history=None):
        super().__init__(msg)
        self.partial = partial
        self.history = history


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @classmethod
    def parse(cls, text: str) -> "Ball":
        vals = [float(t) for t in text.split(",")]
        return cls(tuple(vals[:-1]), vals[-1])

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        return np.linalg.norm(pts - np.asarray(self.center), axis=-1) < self.radius


@dataclass(frozen=True)
class EnergyReport:
    value: float
    interior_interior: float
    interior_exterior: float
    skipped_cells: int
    truncation: float = 0.0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("negative energy")


@dataclass
class MinimizeOptions:
    step: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-9
    r_ext: float = 4.0
    armijo: float = 1e-4

    def __post_init__(self):
        if not 0 < self.step <= 1:
            raise ValueError("step size must lie in (0, 1]")
        if self.max_iter < 0 or not self.tol > 0 or not self.r_ext > 0:
            raise ValueError("invalid minimize options")


class EnergyOperator:
    """Discrete energy of fields on one grid with one domain and exterior.

    Everything that does not depend on the field values (kernel transforms,
    masks and exterior moments) is computed once here.
    """

    def __init__(self, spec: GridSpec, omega: Ball, exterior, flags=None, levels: int = 8):
        if exterior is None:
            raise ValueError("exterior data required: the energy integrates over R^n \\ Omega")
        if not (spec.contains(np.asarray(omega.center)[None], pad=omega.radius)[0]):
            raise ValueError("Omega must lie inside the grid box")
        self.spec, self.omega, self.exterior = spec, omega, exterior
        self.n = spec.n
        self.gamma = gamma_n(self.n)
        flags = np.zeros(spec.counts, bool) if flags is None else np.asarray(flags, bool)
        inside = omega.contains(spec.coords())
        self.mask_in = inside & ~flags
        self.mask_out = ~inside & ~flags
        self.skipped = int(flags.sum())
        self.corr = Correlator(spec.counts, spec.counts, (0,) * self.n, spec.h)
        off = self.corr.offsets()
        dist = np.linalg.norm(off, axis=-1)
        kern = np.zeros_like(dist)
        nz = dist > 0
        kern[nz] = dist[nz] ** (-self.n - 1)
        self.kfft = self.corr.kernel_fft(kern)
        self._far(levels)

    # exterior moments A = int K, B = int K u_ext, C = int K |u_ext|^2 over R^n \ box
    def _far(self, levels):
        spec, n = self.spec, self.n
        lo = spec.lower - spec.h / 2
        hi = spec.upper + spec.h / 2
        pts, wts, outer = exterior_shells(lo, hi, levels=levels,
                                          max_cell=self.exterior.max_cell)
        ext_vals = self.exterior(pts)
        vals = np.column_stack([np.ones(len(wts)), ext_vals, np.sum(ext_vals ** 2, axis=1)])

        def kern(d):
            r2 = np.einsum("...i,...i->...", d, d)
            return r2 ** (-(n + 1) / 2)

        def moments(targets):
            return chunked_kernel_sums(targets, pts, wts, kern, vals)

        # moments are smooth on the scale of the gap between Omega and the box faces
        c = np.asarray(self.omega.center)
        gap = float(np.min(np.minimum(c - lo, hi - c))) - self.omega.radius
        ABC = smooth_on_nodes(spec.lower, spec.h, spec.counts, self.mask_in, moments,
                              max(gap, spec.h))
        A, B, C = ABC[:, 0], ABC[:, 1:-1], ABC[:, -1]
        tail = cube_tail_constant(n) / float(np.min(outer)) if n <= 3 else 0.0
        self.truncation_rate = 0.0
        if self.exterior.far_mean is not None and self.exterior.far_mean_square is not None:
            A = A + tail
            B = B + tail * self.exterior.far_mean
            C = C + tail * self.exterior.far_mean_square
        else:
            self.truncation_rate = tail
        self.A, self.B, self.C = A, B, C

    # ------------------------------------------------------------------
    def _conv(self, f):
        return self.corr.apply(f, self.kfft)

    def _pair_sum(self, u, a, b):
        """``sum_{x,y} a(x) b(y) K(x-y) |u(x)-u(y)|^2`` (unscaled)."""
        uu = np.sum(u * u, axis=-1)
        acc = uu * self._conv(b) + self._conv(b * uu)
        for c in range(u.shape[-1]):
            acc -= 2 * u[..., c] * self._conv(b * u[..., c])
        return float(np.sum(a * acc))

    def _self_cells(self, u):
        if self.n > 3:
            return 0.0
        g = [np.gradient(u[..., c], self.spec.h, edge_order=1) for c in range(u.shape[-1])]
        if self.n == 1:
            g = [[x] for x in g]
        sq = sum(np.sum(np.stack(gc) ** 2, axis=0) for gc in g)
        # neighbors of flagged nodes would difference across the placeholder
        keep = self.mask_in.copy()
        flags = ~(self.mask_in | self.mask_out)
        if flags.any():
            from scipy.ndimage import binary_dilation
            keep &= ~binary_dilation(flags, iterations=1)
        return float(np.sum(sq[keep])) / self.n * self.spec.h ** (self.n + 1) * self_cell_constant(self.n)

    def far_energy(self, u) -> float:
        ui = u.reshape(-1, u.shape[-1])[self.mask_in.ravel()]
        val = self.A * np.sum(ui * ui, 1) - 2 * np.sum(ui * self.B, 1) + self.C
        return float(np.sum(val))

    def objective(self, u) -> float:
        """Off-diagonal discrete energy; the functional that :func:`minimize` descends."""
        h, n = self.spec.h, self.n
        mi = self.mask_in.astype(float)
        mo = self.mask_out.astype(float)
        pairs = self._pair_sum(u, mi, mi + 2 * mo)
        return self.gamma / 4 * (h ** (2 * n) * pairs + 2 * h ** n * self.far_energy(u))

    def report(self, u) -> EnergyReport:
        h, n = self.spec.h, self.n
        mi = self.mask_in.astype(float)
        mo = self.mask_out.astype(float)
        ii_pairs = self._pair_sum(u, mi, mi)
        all_pairs = self._pair_sum(u, mi, mi + 2 * mo)
        selfc = self._self_cells(u)
        ii = self.gamma / 4 * (h ** (2 * n) * ii_pairs + selfc)
        ie = self.gamma / 4 * (h ** (2 * n) * (all_pairs - ii_pairs) + 2 * h ** n * self.far_energy(u))
        ii, ie = max(ii, 0.0), max(ie, 0.0)
        trunc = self.gamma / 2 * h ** n * self.truncation_rate * 4.0 * float(self.mask_in.sum())
        return EnergyReport(ii + ie, ii, ie, self.skipped, trunc)

    def frac_laplacian(self, u) -> np.ndarray:
        """Pointwise ``(-Delta)^{1/2} u`` at interior nodes (zero elsewhere)."""
        h, n = self.spec.h, self.n
        m = (self.mask_in | self.mask_out).astype(float)
        out = u * self._conv(m)[..., None]
        for c in range(u.shape[-1]):
            out[..., c] -= self._conv(m * u[..., c])
        out *= self.gamma * h ** n
        flat = out.reshape(-1, u.shape[-1])
        ui = u.reshape(-1, u.shape[-1])[self.mask_in.ravel()]
        flat_in = flat[self.mask_in.ravel()] + self.gamma * (self.A[:, None] * ui - self.B)
        res = np.zeros_like(flat)
        res[self.mask_in.ravel()] = flat_in
        return res.reshape(u.shape)

    def energy_density(self, u) -> np.ndarray:
        """``(gamma/2) int |u(x)-u(y)|^2 K dy`` at interior nodes (zero elsewhere)."""
        h, n = self.spec.h, self.n
        m = (self.mask_in | self.mask_out).astype(float)
        uu = np.sum(u * u, axis=-1)
        acc = uu * self._conv(m) + self._conv(m * uu)
        for c in range(u.shape[-1]):
            acc -= 2 * u[..., c] * self._conv(m * u[..., c])
        acc *= h ** n
        ui = u.reshape(-1, u.shape[-1])[self.mask_in.ravel()]
        far = self.A * np.sum(ui * ui, 1) - 2 * np.sum(ui * self.B, 1) + self.C
        flat = acc.reshape(-1)
        res = np.zeros_like(flat)
        res[self.mask_in.ravel()] = flat[self.mask_in.ravel()] + far
        return (self.gamma / 2 * res).reshape(uu.shape)


# --------------------------------------------------------------------------
# public operations


def half_energy(u: VectorField, omega: Ball, levels: int = 8) -> EnergyReport:
    """1/2-Dirichlet energy of ``u`` on ``omega``."""
    op = EnergyOperator(u.spec, omega, u.exterior, u.flags, levels)
    return op.report(np.asarray(u.values))


def h_half_seminorm(u: VectorField, omega: Ball) -> float:
    """``[u]_{H^{1/2}(Omega)}``; both variables restricted to ``omega``."""
    ext = u.exterior if u.exterior is not None else ConstantExterior(np.zeros(u.d))
    op = EnergyOperator(u.spec, omega, ext, u.flags, levels=1)
    rep = op.report(np.asarray(u.values))
    return float(np.sqrt(2 * rep.interior_interior))


def fractional_pairing(u: VectorField, phi: VectorField, omega: Ball) -> float:
    """Weak pairing ``<(-Delta)^{1/2} u, phi>_Omega`` for ``phi`` supported in ``omega``."""
    if phi.spec != u.spec:
        raise ValueError("u and phi must share a grid")
    outside = ~omega.contains(u.spec.coords())
    if np.any(phi.values[outside] != 0):
        raise ValueError("phi must vanish outside Omega")
    ext = u.exterior if u.exterior is not None else ConstantExterior(np.zeros(u.d))
    op = EnergyOperator(u.spec, omega, ext, u.flags | phi.flags)
    lu = op.frac_laplacian(np.asarray(u.values))
    return float(np.sum(lu * phi.values) * u.spec.h ** u.n)


def sphere_el_residual(u: VectorField, omega: Ball, op: EnergyOperator = None) -> np.ndarray:
    """``|(-Delta)^{1/2} u - lambda u|`` on interior nodes; NaN elsewhere.

    ``lambda(x) = (gamma/2) int |u(x)-u(y)|^2 / |x-y|^{n+1} dy`` is evaluated
    with the same quadrature as the fractional Laplacian.
    """
    if not u.is_unit(1e-9):
        raise ValueError("residual needs a sphere-valued field")
    op = op or EnergyOperator(u.spec, omega, u.exterior, u.flags)
    vals = np.asarray(u.values)
    lu = op.frac_laplacian(vals)
    lam = op.energy_density(vals)
    res = np.linalg.norm(lu - lam[..., None] * vals, axis=-1)
    res[~op.mask_in] = np.nan
    return res


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    step: float
    residual: float


def minimize(u0: VectorField, omega: Ball, opts: MinimizeOptions = None, op: EnergyOperator = None):
    """Projected gradient descent of the discrete energy into the sphere.

    Interior nodes move along the tangential part of the pointwise fractional
    Laplacian and are projected back onto the sphere; nodes outside
    ``omega`` (and flagged nodes) never change. Steps are chosen by Armijo
    backtracking, so accepted energies never increase.

    Returns
    -------
    (VectorField, list of IterationRecord)
    """
    opts = opts or MinimizeOptions()
    if not u0.is_unit(1e-9):
        raise ValueError("initial field must be sphere valued")
    op = op or EnergyOperator(u0.spec, omega, u0.exterior, u0.flags)
    v = np.array(u0.values)
    mask = op.mask_in
    energy = op.objective(v)
    tau = opts.step
    history = []

    def tangent_grad(w):
        g = op.frac_laplacian(w)
        g -= np.sum(g * w, axis=-1, keepdims=True) * w
        g[~mask] = 0.0
        return g

    g = tangent_grad(v)
    history.append(IterationRecord(0, energy, 0.0, float(np.abs(g).max(initial=0.0))))
    for it in range(1, opts.max_iter + 1):
        gnorm2 = float(np.sum(g * g)) * op.spec.h ** op.n
        if gnorm2 == 0.0:
            break
        while True:
            trial = v.copy()
            trial[mask] = project_to_sphere(v[mask] - tau * g[mask])
            e_trial = op.objective(trial)
            decrease = np.sum((v - trial) * g) * op.spec.h ** op.n
            if e_trial <= energy - opts.armijo * decrease and e_trial <= energy:
                break
            tau *= 0.5
            if tau < 1e-12:
                raise StagnationError("step size collapsed below 1e-12",
                                      u0.with_values(v), history)
        drop = energy - e_trial
        v, energy = trial, e_trial
        g = tangent_grad(v)
        history.append(IterationRecord(it, energy, tau, float(np.abs(g).max())))
        if drop <= opts.tol * max(abs(energy), 1e-300):
            break
        tau = min(1.0, tau * 1.5)
    log.debug("minimize finished after %d iterations, energy %.6g", len(history) - 1, energy)
    return u0.with_values(v), history


@dataclass
class WeakHarmonicReport:
    max_ratio: float
    tol: float
    trials: int
    ratios: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.tol


def _bump_fields(spec: GridSpec, omega: Ball, d: int, trials: int, rng) -> list:
    x = spec.coords()
    c0 = np.asarray(omega.center)
    out = []
    for _ in range(trials):
        phi = np.zeros(spec.counts + (d,))
        for _ in range(3):
            s = omega.radius * rng.uniform(0.15, 0.4)
            dirn = rng.normal(size=spec.n)
            dirn /= np.linalg.norm(dirn)
            c = c0 + dirn * rng.uniform(0, omega.radius - s) * 0.98
            q = np.sum((x - c) ** 2, axis=-1) / s ** 2
            bump = np.where(q < 1, np.exp(-1.0 / np.maximum(1 - q, 1e-300)), 0.0)
            phi += bump[..., None] * rng.normal(size=d)
        out.append(phi)
    return out


def weak_harmonic_test(u: VectorField, omega: Ball, trials: int = 10, tol: float = 1e-6,
                       seed: int = 0, op: EnergyOperator = None) -> WeakHarmonicReport:
    """Test ``<(-Delta)^{1/2} u, phi> = 0`` for random tangent test fields.

    Each ``phi`` is a sum of smooth bumps supported in ``omega`` with random
    vector amplitudes, projected pointwise onto ``u(x)^perp``. The report
    holds ``max |pairing| / ||phi||_{L^2}``.
    """
    rng = np.random.default_rng(seed)
    op = op or EnergyOperator(u.spec, omega, u.exterior, u.flags)
    vals = np.asarray(u.values)
    lu = op.frac_laplacian(vals)
    hn = u.spec.h ** u.n
    ratios = []
    for phi in _bump_fields(u.spec, omega, u.d, trials, rng):
        phi = phi - np.sum(phi * vals, axis=-1, keepdims=True) * vals
        phi[~op.mask_in] = 0.0
        norm = np.sqrt(np.sum(phi * phi) * hn)
        if norm == 0:
            continue
        ratios.append(abs(float(np.sum(lu * phi) * hn)) / norm)
    return WeakHarmonicReport(max(ratios, default=0.0), tol, trials, ratios)
