import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mms_heatlab import space as sp


def flat(extent=(-1.0, 1.0), resolution=8, boundary="neumann"):
    return sp.build_space("interval", 1, extent, resolution,
                          sp.PotentialSpec.zero(), boundary)


def test_flat_interval_cells():
    s = flat()
    assert s.spacing == pytest.approx(0.25)
    assert np.allclose(s.cell_measure, 0.25)
    assert s.total_volume == pytest.approx(2.0, abs=1e-14)


def test_flat_cells_half_width():
    s = flat(extent=(-2.0, 2.0))
    assert np.allclose(s.cell_measure, 0.5)
    assert s.total_volume == pytest.approx(4.0, abs=1e-14)


def test_linear_volume_riemann_convergence():
    # V_f on [-1,1] with f(x)=x -> 2 sinh(1), second order in h
    exact = 2.0 * math.sinh(1.0)
    errs = []
    for res in (64, 128, 256):
        s = sp.build_space("interval", 1, (-1, 1), res,
                           sp.PotentialSpec.linear(1.0), "neumann")
        errs.append(abs(s.total_volume - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)
    assert errs[-1] < 1e-5


def test_radial_ball_volume_limit():
    errs = []
    for res in (128, 256):
        s = sp.build_space("radial", 3, 1.0, res, sp.PotentialSpec.zero(),
                           "neumann")
        errs.append(abs(s.total_volume - 4 * math.pi / 3))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
    assert errs[-1] < 5e-5


def test_ball_volume_flat_exact_at_any_h():
    # fractional boundary cells make V(B_0(r)) = 2r exact on flat grids
    for res in (8, 64, 129):
        s = sp.build_space("interval", 1, (-4, 4), res,
                           sp.PotentialSpec.zero(), "neumann")
        v = sp.ball_volume(s, 0.0, 1.0)
        assert not v.clipped
        assert v.value == pytest.approx(2.0, abs=1e-12)


def test_ball_volume_weighted():
    s = sp.build_space("interval", 1, (-4, 4), 1024,
                       sp.PotentialSpec.linear(1.0), "neumann")
    v = sp.ball_volume(s, 0.0, 1.0)
    assert v.value == pytest.approx(2 * math.sinh(1.0), rel=1e-5)


def test_ball_volume_radial_center():
    s = sp.build_space("radial", 3, 2.0, 1024, sp.PotentialSpec.zero(),
                       "neumann")
    v = sp.ball_volume(s, 0.0, 1.0)
    assert not v.clipped
    assert v.value == pytest.approx(4 * math.pi / 3, rel=1e-5)


def test_ball_clipping_and_total():
    s = flat(resolution=32)
    whole = sp.ball_volume(s, 0.0, 5.0)
    assert whole.clipped
    assert whole.value == pytest.approx(s.total_volume, abs=1e-14)
    inside = sp.ball_volume(s, 0.5, 0.25)
    assert not inside.clipped


@given(st.lists(st.floats(min_value=0.01, max_value=3.9), min_size=2,
                max_size=6))
@settings(max_examples=50, deadline=None)
def test_ball_volume_monotone_in_radius(radii):
    s = sp.build_space("interval", 1, (-4, 4), 64,
                       sp.PotentialSpec.quadratic(1.0), "neumann")
    radii = sorted(radii)
    vols = [sp.ball_volume(s, 0.3, r).value for r in radii]
    assert all(b >= a - 1e-12 for a, b in zip(vols, vols[1:]))


def test_circle_distance_shorter_arc():
    s = sp.build_space("circle", 1, 2 * math.pi, 64,
                       sp.PotentialSpec.zero(), "periodic")
    assert s.distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    # antipodal pair resolves to exactly half the circumference
    assert s.distance(0.0, math.pi) == pytest.approx(math.pi, abs=1e-14)


def test_circle_ball_wraps():
    s = sp.build_space("circle", 1, 2 * math.pi, 64,
                       sp.PotentialSpec.zero(), "periodic")
    v = sp.ball_volume(s, 0.05, 1.0)   # ball crosses the coordinate seam
    assert not v.clipped
    assert v.value == pytest.approx(2.0, abs=1e-12)
    assert sp.ball_volume(s, 0.0, math.pi).clipped


def test_potential_stats_examples():
    s = flat(extent=(-4, 4), resolution=512)
    st_ = sp.potential_stats(s, 0.0, 1.0)
    assert st_ == (0.0, 0.0, False)

    lin = sp.build_space("interval", 1, (-4, 4), 512,
                         sp.PotentialSpec.linear(1.0), "neumann")
    a, ap, clipped = sp.potential_stats(lin, 0.0, 1.0)
    assert not clipped
    assert a == pytest.approx(3.0, abs=2 * lin.spacing)
    assert ap == pytest.approx(1.0, abs=1e-10)

    quad = sp.build_space("interval", 1, (-4, 4), 512,
                          sp.PotentialSpec.quadratic(1.0), "neumann")
    a, ap, _ = sp.potential_stats(quad, 0.0, 1.0)
    assert a == pytest.approx(4.5, abs=4 * quad.spacing)
    assert ap == pytest.approx(3.0, abs=4 * quad.spacing)


def test_potential_stats_monotone_in_R():
    s = sp.build_space("interval", 1, (-6, 6), 256,
                       sp.PotentialSpec.quadratic(-1.0), "neumann")
    stats = [sp.potential_stats(s, 0.0, r) for r in (0.3, 0.7, 1.4, 2.0)]
    for a, b in zip(stats, stats[1:]):
        assert b.A >= a.A - 1e-12
        assert b.Aprime >= a.Aprime - 1e-12


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=16,
                max_size=16))
@settings(max_examples=50, deadline=None)
def test_A_invariant_under_sign_flip(values):
    pos = sp.build_space("interval", 1, (-1, 1), 16,
                         sp.PotentialSpec.custom(values), "neumann")
    neg = sp.build_space("interval", 1, (-1, 1), 16,
                         sp.PotentialSpec.custom([-v for v in values]),
                         "neumann")
    sa = sp.potential_stats(pos, 0.0, 0.2)
    sb = sp.potential_stats(neg, 0.0, 0.2)
    assert sa.A == pytest.approx(sb.A, abs=1e-12)
    assert sa.Aprime == pytest.approx(sb.Aprime, abs=1e-12)


def test_curvature_profiles():
    lin = sp.build_space("interval", 1, (-2, 2), 64,
                         sp.PotentialSpec.linear(1.0), "neumann")
    prof = sp.curvature_profile(lin)
    assert np.allclose(prof.ricf, 0.0, atol=1e-10)
    assert prof.kappa == 0.0

    shrink = sp.build_space("interval", 1, (-2, 2), 64,
                            sp.PotentialSpec.quadratic(1.0), "neumann")
    prof = sp.curvature_profile(shrink)
    assert np.allclose(prof.ricf, 1.0, atol=1e-9)
    assert prof.kappa == 0.0

    expand = sp.build_space("interval", 1, (-2, 2), 64,
                            sp.PotentialSpec.quadratic(-1.0), "neumann")
    prof = sp.curvature_profile(expand)
    assert np.allclose(prof.ricf, -1.0, atol=1e-9)
    assert prof.kappa == pytest.approx(1.0, abs=1e-9)


def test_kappa_invariant_under_constant_shift():
    base = sp.PotentialSpec.linear(2.0, 0.0)
    shifted = sp.PotentialSpec.linear(2.0, 5.0)
    s1 = sp.build_space("interval", 1, (-2, 2), 64, base, "neumann")
    s2 = sp.build_space("interval", 1, (-2, 2), 64, shifted, "neumann")
    p1, p2 = sp.curvature_profile(s1), sp.curvature_profile(s2)
    assert np.allclose(p1.ricf, p2.ricf, atol=1e-9)
    assert p1.kappa == p2.kappa


def test_model_volume_bounds():
    assert sp.model_volume_bounds(1.0, 0.0, 1.0) == pytest.approx((2.0, 2.0))
    assert sp.model_volume_bounds(2.0, 0.0, 1.0) == \
        pytest.approx((math.pi, math.pi))
    lo, hi = sp.model_volume_bounds(3.0, 1.0, 1.0)
    assert lo == pytest.approx(4 * math.pi / 3)
    assert hi == pytest.approx(4 * math.pi / 3 * math.exp(2.0))
    assert lo <= hi
    with pytest.raises(sp.SpaceError):
        sp.model_volume_bounds(0.5, 0.0, 1.0)


def test_build_errors():
    with pytest.raises(sp.SpaceError):
        flat(resolution=4)
    with pytest.raises(sp.InvalidCombination):
        sp.build_space("interval", 1, (-1, 1), 16, sp.PotentialSpec.zero(),
                       "periodic")
    with pytest.raises(sp.InvalidCombination):
        sp.build_space("circle", 1, 2.0, 16, sp.PotentialSpec.zero(),
                       "neumann")
    with pytest.raises(sp.InvalidCombination):
        sp.build_space("radial", 1, 1.0, 16, sp.PotentialSpec.zero(),
                       "neumann")
    with pytest.raises(sp.NonPositiveMeasure):
        sp.build_space("interval", 1, (-1, 1), 16,
                       sp.PotentialSpec.custom([800.0] * 16), "neumann")
    with pytest.raises(sp.NonPositiveMeasure):
        sp.build_space("interval", 1, (-1, 1), 16,
                       sp.PotentialSpec.custom([-800.0] * 16), "neumann")
    with pytest.raises(sp.SpaceError):
        sp.build_space("interval", 1, (-1, 1), 16,
                       sp.PotentialSpec.custom([1.0] * 9), "neumann")


def test_refine_halves_spacing():
    s = flat(resolution=16)
    r = sp.refine(s)
    assert r.n == 32
    assert r.spacing == pytest.approx(s.spacing / 2)
    assert r.total_volume == pytest.approx(s.total_volume, abs=1e-14)


def test_refine_custom_potential_interpolates():
    vals = np.sin(np.linspace(0, 3, 16))
    s = sp.build_space("interval", 1, (0, 3), 16,
                       sp.PotentialSpec.custom(vals), "neumann")
    r = sp.refine(s)
    assert r.n == 32
    # refinement stays anchored to the original table, not the refined nodes
    assert r.potential == pytest.approx(
        np.interp(r.nodes, s.nodes, s.potential), abs=1e-12)


def test_spacing_uniform():
    s = flat(resolution=64)
    gaps = np.diff(s.nodes)
    assert np.allclose(gaps, gaps[0], rtol=sp.SPACING_RTOL, atol=0)
