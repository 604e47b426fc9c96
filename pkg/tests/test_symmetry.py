import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fracmap.energy import Ball
from fracmap.extension import HalfGridSpec, poisson_extend
from fracmap.fields import FunctionExterior, GridSpec, VectorField, analytic_vortex, constant_field
from fracmap.symmetry import (DefectTable, complete_frame, defect_profile, defect_table,
                              effective_span, gradient_superlevel_volume, quantitative_stratum,
                              regularity_scale, regularity_sublevel_volume, singular_candidates,
                              symmetrize, symmetry_defect, tube_volume)

# mean-square floor of the 24-bin piecewise-linear fit on a 0-homogeneous field
FLOOR_24 = 1e-5


def test_complete_frame_is_orthonormal(rng):
    V = np.linalg.qr(rng.normal(size=(3, 2)))[0]
    F = complete_frame(V, 3)
    assert np.allclose(F.T @ F, np.eye(3), atol=1e-12)
    assert np.allclose(F[:, :2], V)


def test_symmetrize_rejects_degenerate_frame(vortex_ext):
    with pytest.raises(ValueError):
        symmetrize(vortex_ext[32], [0, 0], 0.25, np.ones((2, 2)), k=1)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_projection_is_idempotent(vortex_ext, k):
    ue = vortex_ext[32]
    V = np.eye(2)[:, :k]
    first = symmetrize(ue, [0.05, 0.0], 0.3, V)
    again = symmetrize(first.apply_to(ue), [0.05, 0.0], 0.3, V)
    assert np.max(np.abs(again.fitted - first.fitted)) < 1e-12
    assert again.defect < 1e-12


def test_vortex_is_zero_symmetric(vortex_ext):
    fits = defect_profile(vortex_ext[64], [0.0, 0.0], 0.5)
    assert fits[0].defect <= FLOOR_24
    assert fits[1].defect >= 10 * fits[0].defect
    assert fits[2].relative_defect == pytest.approx(1.0)


def test_floor_shrinks_with_bins(vortex_ext):
    d = [symmetry_defect(vortex_ext[64], [0, 0], 0.5, 0, bins=b).defect for b in (12, 24, 48)]
    assert d[0] / d[1] > 4 and d[1] / d[2] > 4


def test_translation_invariant_field_is_one_symmetric():
    # 0-homogeneous about the line x2 = 0 and constant along e1
    f = lambda p: np.stack([p[:, 1] / np.hypot(p[:, 1], 1e-300), np.zeros(len(p))], -1)
    spec = GridSpec.centered(2, 2.0, 1 / 16)
    u = VectorField(spec, f(spec.points()).reshape(spec.counts + (2,)), FunctionExterior(f, "step", [0, 0], 1.0))
    ue = poisson_extend(u, HalfGridSpec.uniform(spec, 0.6, 0.6))
    fit = symmetry_defect(ue, [0.0, 0.03125], 0.5, 1)
    assert abs(fit.V[1, 0]) < 1e-2
    assert fit.defect < 0.05 * symmetry_defect(ue, [0.0, 0.03125], 0.5, 2).defect


@pytest.mark.parametrize("x", [[0.0, 0.0], [0.2, -0.1], [-0.25, 0.3]])
def test_defect_profile_is_monotone(vortex_ext, x):
    fits = defect_profile(vortex_ext[32], x, 0.25)
    d = [f.defect for f in fits]
    assert all(a <= b for a, b in zip(d, d[1:]))


def test_constant_map_has_empty_stratum():
    u = constant_field(GridSpec.centered(2, 1.0, 1 / 8), [1.0, 0.0])
    ue = poisson_extend(u, HalfGridSpec.uniform(u.spec, 0.8, 0.8))
    table = defect_table(ue, [[0.0, 0.0], [0.125, 0.25]], [0.25, 0.5])
    assert np.max(table.defects) < 1e-20
    for k in (0, 1):
        assert not quantitative_stratum(table, k, 1e-10, 0.25).mask.any()


monotone_tables = arrays(float, (6, 4, 3), elements=st.floats(0, 1)).map(
    lambda a: DefectTable(np.arange(12.0).reshape(6, 2), np.array([0.125, 0.25, 0.5, 1.0]),
                          np.cumsum(a, axis=2)))


@given(monotone_tables, st.floats(0.01, 2.0), st.floats(0.0, 1.0), st.sampled_from([0.125, 0.25, 0.5]))
def test_stratum_inclusions(table, eps, deps, r):
    def S(k, e, rr):
        return quantitative_stratum(table, k, e, rr).mask

    # a smaller k, a larger eps or a smaller r can only shrink the stratum
    assert np.all(S(0, eps, r) <= S(1, eps, r))
    assert np.all(S(0, eps + deps, r) <= S(0, eps, r))
    assert np.all(S(1, eps, r / 2) <= S(1, eps, r))


def test_stratum_witness_and_validation():
    table = DefectTable(np.array([[0.0], [1.0]]), np.array([0.25, 0.5, 1.0]),
                        np.array([[[0, 0.5]] * 3, [[0, 0.3], [0, 0.05], [0, 2.0]]]))
    st_ = quantitative_stratum(table, 0, 0.1, 0.25)
    assert st_.mask.tolist() == [True, False]
    assert st_.witness_scale.tolist() == [0.25, 0.5] and st_.witness_defect[1] == 0.05
    assert st_.flagged.tolist() == [[0.0]]
    with pytest.raises(ValueError):
        quantitative_stratum(table, 1, 0.1, 0.25)


def test_vortex_stratum_is_the_origin(vortex_ext):
    pts = [[0.0, 0.0], [0.25, 0.0], [0.0, -0.25]]
    table = defect_table(vortex_ext[32], pts, [0.125, 0.25])
    mask = quantitative_stratum(table, 0, 0.1, 0.125).mask
    assert mask.tolist() == [True, False, False]


def test_effective_span_triangle():
    tri = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    assert effective_span(tri, 0.2).dim == 2
    assert effective_span(tri, 0.45).dim == 1
    assert effective_span(tri, 0.6).dim == 0
    sp = effective_span(tri, 0.2)
    assert np.allclose(sp.basis @ sp.basis.T, np.eye(2))
    with pytest.raises(ValueError):
        effective_span(np.zeros((0, 2)), 0.1)


@given(arrays(float, (8, 3), elements=st.floats(-1, 1)), st.floats(0.01, 0.5))
def test_effective_span_covers_within_two_rho(pts, rho):
    sp = effective_span(pts, rho)
    rel = pts - sp.origin
    resid = rel - (rel @ sp.basis.T) @ sp.basis
    assert np.linalg.norm(resid, axis=1).max() < 2 * rho + 1e-12


@pytest.fixture(scope="module")
def vortex128():
    return analytic_vortex(GridSpec.centered(2, 1.25, 1 / 128))


def test_regularity_scale_of_vortex(vortex128, rng):
    h = vortex128.spec.h
    for x in rng.uniform(-0.9, 0.9, size=(10, 2)):
        assert abs(regularity_scale(vortex128, x) - min(np.linalg.norm(x) / 2, 1)) <= 2 * h
    assert regularity_scale(vortex128, [3.0, 0.0]) == 1.0


@pytest.mark.parametrize("r", [0.1, 0.2, 0.4])
def test_superlevel_volume_of_vortex(vortex128, r):
    assert gradient_superlevel_volume(vortex128, r) / (math.pi * r * r) == pytest.approx(1, abs=0.1)


@pytest.mark.parametrize("r", [0.05, 0.1, 0.2])
def test_regularity_sublevel_of_vortex(vortex128, r):
    assert regularity_sublevel_volume(vortex128, r) / (4 * math.pi * r * r) == pytest.approx(1, abs=0.1)


def test_tube_volume():
    spec = GridSpec.centered(2, 1.0, 1 / 64)
    S = np.zeros(spec.counts, bool)
    assert tube_volume(spec, S, 0.1) == 0.0
    S[spec.index_of(np.zeros(2))] = True
    assert tube_volume(spec, S, 0.2) == pytest.approx(math.pi * 0.04, rel=0.05)
    assert tube_volume(spec, S, 0.2, window=Ball([0.5, 0.0], 0.1)) == 0.0
    with pytest.raises(ValueError):
        tube_volume(spec, S, spec.h / 2)


def test_singular_candidates(vortex_ext):
    ue = vortex_ext[32]
    mask = singular_candidates(ue, 2.5, 0.25)
    c = ue.spec.base.coords()[mask]
    assert len(c) and np.linalg.norm(c, axis=1).max() < 4 * ue.spec.base.h
    with pytest.raises(ValueError):
        singular_candidates(ue, 0.0, 0.25)
