import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import sici

from fracmap.energy import (Ball, EnergyOperator, EnergyReport, MinimizeOptions, StagnationError,
                            fractional_pairing, h_half_seminorm, half_energy, minimize,
                            sphere_el_residual, weak_harmonic_test)
from fracmap.fields import (ConstantExterior, FunctionExterior, GridSpec, VectorField, analytic_vortex,
                            constant_field, project_to_sphere)


def spiral(a):
    return lambda p: np.stack([np.cos(a * p[..., 0]), np.sin(a * p[..., 0])], -1)


def spiral_energy_exact(a, L):
    """Energy of ``x -> exp(i a x)`` on ``(-L, L)``; the pair set at offset t has length 2L + min(|t|, 2L)."""
    b = a / 2
    c = 2 * L
    near = integrate.quad(lambda t: 4 * math.sin(b * t) ** 2 / t ** 2 * (2 * L + t), 0, c,
                          epsabs=1e-14, epsrel=1e-13)[0]
    # int_c^inf sin^2(bt)/t^2 dt in closed form
    tail = math.sin(b * c) ** 2 / c + b * (math.pi / 2 - sici(2 * b * c)[0])
    return (2 * near + 2 * 4 * L * 4 * tail) / (4 * math.pi)


def test_ball_parse_and_contains():
    b = Ball.parse("0.5,-1,2")
    assert b.center == (0.5, -1.0) and b.radius == 2.0
    assert b.contains([[0.5, 0.9]])[0] and not b.contains([[0.5, 1.0]])[0]
    with pytest.raises(ValueError):
        Ball((0.0,), 0.0)


def test_energy_report_rejects_negative():
    with pytest.raises(ValueError):
        EnergyReport(-1.0, 0.0, 0.0, 0)


@pytest.mark.parametrize("n", [1, 2])
def test_constant_map_has_zero_energy(n):
    u = constant_field(GridSpec.centered(n, 1.0, 1 / 16), [0.0, 1.0])
    rep = half_energy(u, Ball(np.zeros(n), 0.5))
    assert rep.value == pytest.approx(0.0, abs=1e-13)
    assert h_half_seminorm(u, Ball(np.zeros(n), 0.5)) == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("a,L", [(2.0, 0.5), (1.0, 0.75)])
def test_spiral_energy_matches_exact_integral(a, L):
    f = spiral(a)
    spec = GridSpec.centered(1, 2.0, 1 / 64)
    u = VectorField(spec, f(spec.coords()), FunctionExterior(f, "spiral", [0, 0], 1.0, max_cell=0.1))
    rep = half_energy(u, Ball([0.0], L))
    assert rep.value == pytest.approx(spiral_energy_exact(a, L), rel=2e-5)
    assert rep.interior_interior + rep.interior_exterior == pytest.approx(rep.value)


def test_vortex_energy_is_linear_in_the_radius():
    # 0-homogeneous map in the plane: E(D_r) = r E(D_1)
    u = analytic_vortex(GridSpec.centered(2, 2.0, 1 / 32))
    e = [half_energy(u, Ball((0, 0), r)).value for r in (0.25, 0.5, 1.0)]
    assert e[1] / e[0] == pytest.approx(2.0, rel=0.02)
    assert e[2] / e[1] == pytest.approx(2.0, rel=0.02)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0.2, 0.6))
def test_seminorm_bounded_by_energy(coef, radius):
    spec = GridSpec.centered(1, 1.0, 1 / 32)
    x = spec.coords()[..., 0]
    ang = sum(c * np.sin((k + 1) * x) for k, c in enumerate(coef))
    u = VectorField(spec, np.stack([np.cos(ang), np.sin(ang)], -1), ConstantExterior([1.0, 0.0]))
    om = Ball([0.0], radius)
    e = half_energy(u, om).value
    s = h_half_seminorm(u, om)
    assert s * s <= 2 * e * (1 + 1e-9) + 1e-12


def test_pairing_is_the_energy_derivative(rng):
    spec = GridSpec.centered(2, 1.0, 1 / 16)
    u = analytic_vortex(spec)
    om = Ball((0.0, 0.0), 0.6)
    op = EnergyOperator(spec, om, u.exterior, u.flags)
    phi = rng.normal(size=u.values.shape)
    phi[~op.mask_in] = 0.0
    v = np.asarray(u.values)
    t = 1e-5
    fd = (op.objective(v + t * phi) - op.objective(v - t * phi)) / (2 * t)
    pair = fractional_pairing(u, u.with_values(phi), om)
    assert pair == pytest.approx(fd, rel=1e-7)


def test_pairing_needs_support_in_omega():
    spec = GridSpec.centered(2, 1.0, 1 / 8)
    u = analytic_vortex(spec)
    with pytest.raises(ValueError):
        fractional_pairing(u, u.with_values(np.ones_like(u.values)), Ball((0, 0), 0.5))


def test_el_residual_is_nan_outside_and_needs_unit_values():
    spec = GridSpec.centered(2, 1.0, 1 / 16)
    u = analytic_vortex(spec)
    om = Ball((0, 0), 0.5)
    res = sphere_el_residual(u, om)
    inside = om.contains(spec.coords())
    assert np.all(np.isnan(res[~inside]))
    assert np.all(np.isfinite(res[inside]))
    with pytest.raises(ValueError):
        sphere_el_residual(u.with_values(2 * np.asarray(u.values)), om)


def test_vortex_residual_converges_at_second_order():
    maxes = []
    for N in (16, 32):
        spec = GridSpec.centered(2, 2.0, 1 / N)
        u = analytic_vortex(spec)
        res = sphere_el_residual(u, Ball((0, 0), 1.0))
        r = np.linalg.norm(spec.coords(), axis=-1)
        maxes.append(np.nanmax(np.where((r > 0.3) & (r < 0.7), res, np.nan)))
    assert maxes[0] / maxes[1] > 3.0


@pytest.mark.parametrize("kw", [{"step": 0.0}, {"step": 1.5}, {"tol": 0.0}, {"max_iter": -1}])
def test_minimize_options_validated(kw):
    with pytest.raises(ValueError):
        MinimizeOptions(**kw)


def test_minimize_decreases_energy_and_keeps_exterior():
    spec = GridSpec.centered(2, 1.0, 1 / 16)
    u = analytic_vortex(spec)
    om = Ball((0, 0), 0.5)
    rng = np.random.default_rng(3)
    v = np.array(u.values)
    m = om.contains(spec.coords()) & ~u.flags
    v[m] = project_to_sphere(v[m] + 0.3 * rng.normal(size=v[m].shape))
    out, hist = minimize(u.with_values(v), om, MinimizeOptions(max_iter=60))
    e = np.array([h.energy for h in hist])
    assert np.all(np.diff(e) <= 0)
    assert e[-1] < e[0]
    assert out.is_unit(1e-12)
    assert np.array_equal(np.asarray(out.values)[~m], v[~m])


def test_minimize_rejects_non_unit_start():
    u = analytic_vortex(GridSpec.centered(2, 1.0, 1 / 8))
    with pytest.raises(ValueError):
        minimize(u.with_values(0.5 * np.asarray(u.values)), Ball((0, 0), 0.5))


def test_stagnation_error_carries_partial_state():
    err = StagnationError("x", partial="field", history=[1])
    assert err.partial == "field" and err.history == [1]


def test_weak_harmonic_test_bounded_by_residual():
    # for tangent phi, <Lu, phi> = <Lu - lambda u, phi> <= ||residual||_2 ||phi||_2
    spec = GridSpec.centered(2, 1.5, 1 / 16)
    u = analytic_vortex(spec)
    om = Ball((0, 0), 0.8)
    res = sphere_el_residual(u, om)
    l2 = math.sqrt(np.nansum(res ** 2) * spec.h ** 2)
    rep = weak_harmonic_test(u, om, trials=6, tol=l2)
    assert rep.passed and len(rep.ratios) == 6


def test_weak_harmonic_test_detects_non_harmonic_map():
    spec = GridSpec.centered(2, 1.5, 1 / 16)
    u = analytic_vortex(spec)
    x = spec.coords()
    ang = np.arctan2(x[..., 1], x[..., 0]) + 2.0 * np.exp(-8 * np.sum(x * x, -1))
    bent = u.with_values(np.stack([np.cos(ang), np.sin(ang)], -1))
    om = Ball((0, 0), 0.8)
    clean = weak_harmonic_test(u, om, trials=6)
    rep = weak_harmonic_test(bent, om, trials=6)
    assert rep.max_ratio > 10 * clean.max_ratio
