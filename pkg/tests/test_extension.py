import math

import numpy as np
import pytest

from fracmap.extension import (HalfField, HalfGridSpec, ResolutionError, annulus_radial_integral,
                               cell_kernels, density_curve, directional_energy_matrix,
                               extension_energy_comparison, halfball_energy, monotonicity_audit,
                               pinching_w, poisson_extend, theta_density, theta_field, xi_density)
from fracmap.fields import (DomainError, FunctionExterior, GridSpec, VectorField, analytic_vortex,
                            constant_field)

from oracles import cos_field, cos_radial_exact, cos_theta_exact


@pytest.fixture(scope="module")
def cos_ext_128():
    x0 = math.pi / 4
    u = cos_field(128)
    return x0, poisson_extend(u, HalfGridSpec.uniform(u.spec, 1.2, 1.1, center=[x0]))


def test_half_grid_levels():
    spec = GridSpec.centered(1, 2.0, 0.1)
    hs = HalfGridSpec.uniform(spec, 1.0, 1.0)
    assert np.allclose(hs.z, 0.1 * (np.arange(len(hs.z)) + 0.5))
    assert hs.z_faces[0] == 0.0 and np.allclose(hs.dz, 0.1)
    g = HalfGridSpec.geometric(spec, 1.0, 1.0)
    assert g.z[0] == pytest.approx(0.05) and np.allclose(np.diff(np.log(g.z)), math.log(1.25))
    assert g.spacing_at(0.0) == pytest.approx(g.dz[0])
    with pytest.raises(ValueError):
        HalfGridSpec(hs.base, (0.2, 0.1))
    with pytest.raises(ValueError):
        HalfGridSpec.geometric(spec, 1.0, 1.0, ratio=1.0)


@pytest.mark.parametrize("n", [1, 2])
def test_cell_kernels_integrate_to_one(n):
    # the cell-integrated kernel over a big box is the harmonic measure of the box
    h, z = 0.05, 0.2
    m = int(40 / h) if n == 1 else 160
    ax = h * np.arange(-m, m + 1)
    off = np.stack(np.meshgrid(*[ax] * n, indexing="ij"), -1)
    w, dxs, dz = cell_kernels(off, h, z)
    width = (m + 0.5) * h
    if n == 1:
        expected = 2 / math.pi * math.atan(width / z)
        assert w.sum() == pytest.approx(expected, rel=1e-12)
        # d/dz of the harmonic measure
        assert dz.sum() == pytest.approx(-2 / math.pi * width / (width ** 2 + z ** 2), rel=1e-9)
    else:
        assert 1 - w.sum() < 0.03 and w.min() > 0
    assert all(abs(d.sum()) < 1e-10 for d in dxs)


def test_extension_requires_exterior_and_alignment():
    spec = GridSpec.centered(1, 1.0, 0.1)
    with pytest.raises(ValueError):
        poisson_extend(VectorField(spec, np.ones((20, 1))), HalfGridSpec.uniform(spec, 0.5, 0.5))
    u = constant_field(spec, [1.0])
    other = GridSpec((0.013,), 0.1, (5,))
    with pytest.raises(ValueError):
        poisson_extend(u, HalfGridSpec(other, (0.05, 0.15)))


@pytest.mark.parametrize("n", [1, 2])
def test_constant_extends_to_constant(n):
    u = constant_field(GridSpec.centered(n, 2.0, 1 / 16), [0.3, -0.4])
    ue = poisson_extend(u, HalfGridSpec.uniform(u.spec, 1.0, 1.0))
    assert np.max(np.abs(ue.values - [0.3, -0.4])) < 1e-12
    assert np.max(np.abs(ue.grad)) < 1e-12


def test_cos_extension_converges_at_second_order():
    errs = []
    for N in (64, 128):
        u = cos_field(N)
        hs = HalfGridSpec.uniform(u.spec, 1.5, 1.0)
        ue = poisson_extend(u, hs)
        X = hs.base.coords()[..., 0][:, None]
        Z = np.asarray(hs.z)[None, :]
        errs.append(np.max(np.abs(ue.values[..., 0] - np.exp(-Z) * np.cos(X))))
        # derivatives away from the first level
        gz = -np.exp(-Z) * np.cos(X)
        assert np.max(np.abs(ue.grad[:, 4:, 1, 0] - gz[:, 4:])) < 5e-3
    assert errs[1] < 1e-5
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_separable_2d_extension():
    f = lambda p: (np.cos(p[:, 0]) * np.cos(p[:, 1]))[:, None]
    errs = []
    for N in (8, 16):
        spec = GridSpec.centered(2, 4.0, 1 / N)
        u = VectorField(spec, f(spec.points()).reshape(spec.counts + (1,)),
                        FunctionExterior(f, "cc", [0.0], 0.25))
        ue = poisson_extend(u, HalfGridSpec.uniform(spec, 0.75, 0.75))
        X = ue.spec.base.coords()
        Z = np.asarray(ue.spec.z)
        ex = np.exp(-math.sqrt(2) * Z) * (np.cos(X[..., 0]) * np.cos(X[..., 1]))[..., None]
        errs.append(np.max(np.abs(ue.values[..., 0] - ex)))
    assert errs[1] < 5e-4 and errs[0] / errs[1] > 2.5


def test_half_field_sampling():
    u = constant_field(GridSpec.centered(2, 1.0, 1 / 8), [0.6, 0.8])
    ue = poisson_extend(u, HalfGridSpec.uniform(u.spec, 0.5, 0.5))
    assert np.allclose(ue.sample([[0.1, -0.2, 0.3]]), [[0.6, 0.8]])
    with pytest.raises(DomainError):
        ue.sample([[0.0, 0.0, 5.0]])


@pytest.mark.parametrize("r", [0.25, 0.5, 1.0])
def test_cos_theta_matches_exact(cos_ext_128, r):
    # the half-ball cut is resolved to first order in h
    x0, ue = cos_ext_128
    u = cos_field(64)
    coarse = poisson_extend(u, HalfGridSpec.uniform(u.spec, 1.2, 1.1, center=[x0]))
    exact = cos_theta_exact(r)
    e64 = theta_density(coarse, [x0], r) - exact
    e128 = theta_density(ue, [x0], r) - exact
    assert abs(e128) < 5e-3 * exact
    assert 1.7 < e64 / e128 < 2.3
    assert halfball_energy(ue, [x0], r) == theta_density(ue, [x0], r)  # n = 1: r^{1-n} = 1


@pytest.mark.parametrize("rho,r", [(0.1, 0.3), (0.2, 0.5), (0.3, 1.0)])
def test_exact_identity_oracles_agree(rho, r):
    # dual oracle: both sides of the monotonicity identity by scipy quadrature
    x0 = math.pi / 4
    lhs = cos_theta_exact(r) - cos_theta_exact(rho)
    assert cos_radial_exact(rho, r, x0) == pytest.approx(lhs, rel=1e-10)


def test_audit_approaches_exact_values(cos_ext_128):
    x0, ue = cos_ext_128
    pairs = [(0.1, 0.3), (0.2, 0.5), (0.3, 1.0)]
    audit = monotonicity_audit(ue, [x0], pairs)
    for (a, b), lhs, rhs in zip(pairs, audit.lhs, audit.rhs):
        exact = cos_theta_exact(b) - cos_theta_exact(a)
        assert lhs == pytest.approx(exact, rel=1e-2)
        assert rhs == pytest.approx(exact, rel=1e-2)
        assert annulus_radial_integral(ue, [x0], a, b) == pytest.approx(rhs)
    assert audit.floor == 1e-14
    assert audit.rows()[0] == ("rho", "r", "lhs", "rhs", "mismatch")
    with pytest.raises(ValueError):
        monotonicity_audit(ue, [x0], [(0.5, 0.2)])


def test_theta_is_monotone_for_cos(cos_ext_128):
    x0, ue = cos_ext_128
    curve = density_curve(ue, [x0], [0.8, 0.1, 0.2, 0.4])
    assert np.all(np.diff(curve.radii) > 0) and np.all(np.diff(curve.theta) > 0)
    assert curve.to_csv_rows()[0] == ("r", "theta")
    assert pinching_w(ue, [x0], 0.1) > 0


def test_theta_field_matches_pointwise():
    u = analytic_vortex(GridSpec.centered(2, 1.5, 1 / 16))
    ue = poisson_extend(u, HalfGridSpec.uniform(u.spec, 1.0, 0.6))
    T = theta_field(ue, 0.25)
    c = ue.spec.base.coords()
    for idx in [(16, 16), (10, 20), (20, 9)]:
        assert T[idx] == pytest.approx(theta_density(ue, c[idx], 0.25), rel=1e-10)
    assert np.isnan(T[0, 0])


def test_vortex_theta_depends_on_h_over_r(vortex_ext):
    a = theta_density(vortex_ext[32], [0, 0], 0.25)
    b = theta_density(vortex_ext[64], [0, 0], 0.125)
    assert a == pytest.approx(b, rel=1e-4)


def test_vortex_density_extrapolates_to_pi(vortex_ext):
    # Theta(vortex, 0, r) = pi at every radius; the O(h / r) deficit cancels in 2 Theta(2r) - Theta(r)
    errs = []
    for N in (32, 64):
        t = [theta_density(vortex_ext[N], [0, 0], r) for r in (0.25, 0.5)]
        assert t[0] < t[1] < math.pi
        errs.append(abs(2 * t[1] - t[0] - math.pi))
    assert errs[1] < 0.01 * math.pi
    assert 1.4 < errs[0] / errs[1] < 2.8


def test_xi_density_checks_radii(vortex_ext):
    ue = vortex_ext[32]
    with pytest.raises(ResolutionError):
        xi_density(ue, [0, 0], [0.1, 0.2])
    with pytest.raises(ResolutionError):
        xi_density(ue, [0, 0], [0.1, 0.25, 0.5])
    with pytest.raises(ResolutionError):
        xi_density(ue, [0, 0], [0.0625, 0.125, 0.25])
    curve = xi_density(ue, [0, 0], [0.125, 0.25, 0.5])
    assert curve.xi >= 0 and curve.xi_error > 0


def test_directional_energy_sees_invariant_direction():
    f = lambda p: np.stack([np.cos(p[:, 0]), np.sin(p[:, 0])], -1)
    spec = GridSpec.centered(2, 3.0, 1 / 8)
    u = VectorField(spec, f(spec.points()).reshape(spec.counts + (2,)), FunctionExterior(f, "s", [0, 0], 1.0))
    ue = poisson_extend(u, HalfGridSpec.uniform(spec, 0.6, 0.6))
    de = directional_energy_matrix(ue, [0.0, 0.0], 0.5)
    assert abs(de.matrix[1, 1]) < 1e-10 * de.matrix[0, 0]
    assert de.subspace_energy(np.array([[0.0], [1.0]])) == pytest.approx(de.matrix[1, 1])
    assert np.allclose(np.abs(de.eigenvectors[:, 0]), [0, 1], atol=1e-8)


def test_extension_energy_comparison():
    u = cos_field(32, L=8)
    c = extension_energy_comparison(u, [0.3], 0.5)
    assert not c.degenerate and 0 < c.ratio < 10
    k = constant_field(GridSpec.centered(1, 4.0, 1 / 16), [1.0])
    assert extension_energy_comparison(k, [0.0], 0.5).degenerate
    with pytest.raises(DomainError):
        extension_energy_comparison(u, [7.5], 0.5)


def test_half_field_shapes():
    u = constant_field(GridSpec.centered(2, 1.0, 1 / 4), [1.0, 0.0, 0.0])
    ue = poisson_extend(u, HalfGridSpec.uniform(u.spec, 0.5, 0.5))
    assert isinstance(ue, HalfField)
    assert ue.values.shape == ue.spec.base.counts + (len(ue.spec.z), 3)
    assert ue.grad.shape == ue.spec.base.counts + (len(ue.spec.z), 3, 3)
