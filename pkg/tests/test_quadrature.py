import math

import numpy as np
import pytest
from scipy import integrate

from fracmap.quadrature import (Correlator, ball_cell_fractions, chunked_kernel_sums,
                                cube_tail_constant, exterior_shells, gamma_n,
                                self_cell_constant, smooth_on_nodes, sphere_area)


@pytest.mark.parametrize("n,expected", [(1, 1 / math.pi), (2, 1 / (2 * math.pi)), (3, math.pi ** -2)])
def test_gamma_closed_forms(n, expected):
    assert gamma_n(n) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("z", [0.1, 1.0, 7.0])
def test_poisson_kernel_has_unit_mass(n, z):
    f = lambda r: gamma_n(n) * z * sphere_area(n) * r ** (n - 1) / (r * r + z * z) ** ((n + 1) / 2)
    mass, _ = integrate.quad(f, 0, np.inf, epsabs=1e-13, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-9)


def test_gamma_rejects_nonpositive():
    with pytest.raises(ValueError):
        gamma_n(0)


def test_cube_tail_by_angular_integral():
    # outside the unit cube, int |y|^{-3} dy over R^2 = int_0^{2 pi} max(|cos|, |sin|) dt
    val, _ = integrate.quad(lambda t: max(abs(math.cos(t)), abs(math.sin(t))), 0, 2 * math.pi,
                            points=[math.pi / 4 * k for k in range(1, 8)])
    assert cube_tail_constant(2) == pytest.approx(val, rel=1e-12)
    assert cube_tail_constant(1) == 2.0


def test_cube_tail_three_d_monte_carlo(rng):
    # int |y|^{-4} outside the cube = int over S^2 of max_i |theta_i|
    v = rng.normal(size=(400000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    mc = 4 * math.pi * np.mean(np.max(np.abs(v), axis=1))
    assert cube_tail_constant(3) == pytest.approx(mc, rel=5e-3)


def test_self_cell_constants():
    assert self_cell_constant(1) == 1.0
    f = lambda y, x: (1 - x) * (1 - y) / math.hypot(x, y)
    val, _ = integrate.dblquad(f, 0, 1, 0, 1, epsabs=1e-12)
    assert self_cell_constant(2) == pytest.approx(4 * val, rel=1e-8)
    assert 0 < self_cell_constant(3) < 8


@pytest.mark.parametrize("shape,win,off", [((12,), (5,), (3,)), ((9, 7), (4, 3), (2, 1)), ((5, 6, 4), (2, 3, 2), (1, 2, 1))])
def test_correlator_matches_direct_sum(rng, shape, win, off):
    h = 0.3
    c = Correlator(shape, win, off, h)
    f = rng.normal(size=shape)
    kern_fn = lambda d: np.exp(-np.sum(d * d, axis=-1)) * (1 + d[..., 0])
    kfft = c.kernel_fft(kern_fn(c.offsets()))
    got = c.apply(f, kfft)
    src = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), -1).reshape(-1, len(shape))
    direct = np.empty(win)
    for i in np.ndindex(*win):
        tgt = np.asarray(i) + np.asarray(off)
        direct[i] = np.sum(f.reshape(-1) * kern_fn(h * (src - tgt)))
    assert np.allclose(got, direct, atol=1e-12)
    assert np.allclose(c.apply_fft(c.source_fft(f), kfft), got)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_exterior_shells_cover_the_annulus(n):
    lo, hi = -np.ones(n), np.ones(n) * 0.5
    pts, wts, outer = exterior_shells(lo, hi, levels=3, subdiv=2)
    vol = np.prod(2 * outer) - np.prod(hi - lo)
    assert wts.sum() == pytest.approx(vol, rel=1e-12)
    c = 0.5 * (lo + hi)
    inside_inner = np.all(np.abs(pts - c) < 0.5 * (hi - lo), axis=1)
    assert not inside_inner.any()
    assert np.all(np.abs(pts - c) <= outer + 1e-12)


def test_exterior_shells_levels_and_tail():
    # the kernel tail outside B_0 equals cube_tail_constant / half width
    pts, wts, outer, lev = exterior_shells(-np.ones(2), np.ones(2), levels=14, subdiv=6,
                                           return_levels=True)
    assert set(np.unique(lev)) == set(range(14))
    approx = np.sum(wts * np.linalg.norm(pts, axis=1) ** -3) + cube_tail_constant(2) / outer[0]
    assert approx == pytest.approx(cube_tail_constant(2), rel=1e-3)


def test_exterior_shells_max_cell_refines():
    a = exterior_shells(-np.ones(1), np.ones(1), levels=2, subdiv=2)[0]
    b = exterior_shells(-np.ones(1), np.ones(1), levels=2, subdiv=2, max_cell=0.1)[0]
    assert b.shape[0] > a.shape[0]


def test_chunked_kernel_sums(rng):
    t = rng.normal(size=(7, 2))
    s = rng.normal(size=(11, 2))
    w = rng.uniform(size=11)
    v = rng.normal(size=(11, 3))
    kern = lambda d: np.exp(-np.sum(d * d, axis=-1))
    K = kern(t[:, None] - s[None])
    assert np.allclose(chunked_kernel_sums(t, s, w, kern), K @ w)
    assert np.allclose(chunked_kernel_sums(t, s, w, kern, v), (K * w) @ v)


@pytest.mark.parametrize("radius", [0.3, 0.77])
def test_ball_cell_fractions_area(radius):
    h = 0.02
    ax = np.arange(-1, 1, h) + h / 2
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    frac = ball_cell_fractions(lambda p: np.linalg.norm(p, axis=-1), pts, np.full_like(pts, h), radius, sub=8)
    assert np.all((frac >= 0) & (frac <= 1))
    assert frac.sum() * h * h == pytest.approx(math.pi * radius ** 2, rel=2e-3)


def test_smooth_on_nodes_interpolates_smooth_functions():
    h = 0.01
    counts = (201, 151)
    lower = np.array([-1.0, -0.75])
    mask = np.zeros(counts, bool)
    mask[20:180, 10:140] = True
    func = lambda p: np.stack([np.sin(p[:, 0]) * np.exp(p[:, 1]), p[:, 0] * p[:, 1]], axis=1)
    got = smooth_on_nodes(lower, h, counts, mask, func, scale=1.0, ppw=10)
    exact = func(lower + h * np.argwhere(mask))
    assert got.shape == exact.shape
    assert np.max(np.abs(got - exact)) < 1e-5
    direct = smooth_on_nodes(lower, h, counts, mask, func, scale=0.01)
    assert np.array_equal(direct, exact)
