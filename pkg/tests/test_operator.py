import math

import numpy as np
import pytest

from mms_heatlab import operator as op_mod
from mms_heatlab import space as sp

from conftest import make_space


def test_constants_harmonic_neumann(flat_line, circle_2pi):
    for s in (flat_line, circle_2pi):
        op = op_mod.assemble(s)
        out = op_mod.apply(op, np.ones(s.n))
        assert np.abs(out).max() == 0.0  # exact cancellation of w*(1-1)


def test_flat_interior_is_second_difference(flat_line):
    op = op_mod.assemble(flat_line)
    h = flat_line.spacing
    e = np.zeros(flat_line.n)
    e[100] = 1.0
    out = op_mod.apply(op, e)
    assert out[100] == pytest.approx(-2.0 / h**2)
    assert out[99] == pytest.approx(1.0 / h**2)
    assert out[101] == pytest.approx(1.0 / h**2)


def test_drift_consistency_second_order():
    # f(x)=x: Lu -> u'' - u' for u = sin(x), checked by halving h
    u = np.sin
    lap = lambda x: -np.sin(x) - np.cos(x)
    errs = []
    for res in (256, 512, 1024):
        s = make_space(extent=(-3, 3), resolution=res,
                       potential=sp.PotentialSpec.linear(1.0))
        op = op_mod.assemble(s)
        errs.append(op_mod.consistency_residual(op, u, lap))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)


def test_constant_potential_shift_cancels():
    base = make_space(resolution=64, potential=sp.PotentialSpec.linear(1.0))
    shifted = make_space(resolution=64,
                         potential=sp.PotentialSpec.linear(1.0, 7.0))
    u = np.random.default_rng(3).normal(size=64)
    a = op_mod.apply(op_mod.assemble(base), u)
    b = op_mod.apply(op_mod.assemble(shifted), u)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(a).max())


@pytest.mark.parametrize("kind,extent,potential,boundary,dim", [
    ("interval", (-2, 2), sp.PotentialSpec.zero(), "neumann", 1),
    ("interval", (-2, 2), sp.PotentialSpec.linear(1.0), "neumann", 1),
    ("interval", (-2, 2), sp.PotentialSpec.quadratic(-1.0), "dirichlet", 1),
    ("circle", 2 * math.pi, sp.PotentialSpec.quadratic(1.0), "periodic", 1),
    ("radial", 2.0, sp.PotentialSpec.linear(0.5), "neumann", 3),
    ("radial", 2.0, sp.PotentialSpec.zero(), "dirichlet", 2),
])
def test_self_adjointness_random_pairs(kind, extent, potential, boundary, dim):
    s = sp.build_space(kind, dim, extent, 96, potential, boundary)
    op = op_mod.assemble(s)
    rng = np.random.default_rng(11)
    scale = None
    for _ in range(100):
        u = rng.normal(size=s.n)
        v = rng.normal(size=s.n)
        lhs = op_mod.weighted_inner(s, op_mod.apply(op, u), v)
        rhs = op_mod.weighted_inner(s, u, op_mod.apply(op, v))
        scale = scale or max(abs(lhs), 1.0)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), scale)


def test_circle_sin_eigenfunction():
    errs = []
    for res in (128, 256):
        s = make_space("circle", extent=2 * math.pi, resolution=res,
                       boundary="periodic")
        op = op_mod.assemble(s)
        u = np.sin(s.nodes)
        errs.append(np.abs(op_mod.apply(op, u) + u).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
    assert errs[1] < 1e-3


def test_indicator_mass_conservation(flat_line, circle_2pi):
    for s in (flat_line, circle_2pi):
        op = op_mod.assemble(s)
        e = np.zeros(s.n)
        e[s.n // 3] = 1.0
        out = op_mod.apply(op, e)
        mass = op_mod.weighted_inner(s, out, np.ones(s.n))
        assert abs(mass) < 1e-12 * np.abs(out).max()


def test_weighted_inner_examples():
    s = make_space(extent=(-1, 1), resolution=512)
    ones = np.ones(s.n)
    assert op_mod.weighted_inner(s, ones, ones) == pytest.approx(
        s.total_volume, abs=1e-13)
    x = s.nodes
    assert op_mod.weighted_inner(s, x, x) == pytest.approx(2 / 3, rel=1e-5)

    lin = make_space(extent=(-1, 1), resolution=512,
                     potential=sp.PotentialSpec.linear(1.0))
    assert op_mod.weighted_inner(lin, ones, ones) == pytest.approx(
        2 * math.sinh(1.0), rel=1e-5)


def test_similarity_symmetry():
    s = make_space(extent=(-2, 2), resolution=64,
                   potential=sp.PotentialSpec.quadratic(1.0))
    op = op_mod.assemble(s)
    basis = np.eye(s.n)
    L = np.column_stack([op_mod.apply(op, basis[:, j]) for j in range(s.n)])
    d = np.sqrt(s.cell_measure)
    S_manual = -(L * d[:, None] / d[None, :])
    assert np.abs(S_manual - S_manual.T).max() < 1e-12 * np.abs(S_manual).max()
    assert np.allclose(S_manual, op.sym_dense(), rtol=1e-12,
                       atol=1e-12 * np.abs(S_manual).max())


def test_length_mismatch_raises(flat_line):
    op = op_mod.assemble(flat_line)
    with pytest.raises(ValueError):
        op_mod.apply(op, np.ones(3))
    with pytest.raises(ValueError):
        op_mod.weighted_inner(flat_line, np.ones(3), np.ones(flat_line.n))


def test_dirichlet_negative_definite():
    s = make_space(extent=(0, 1), resolution=64, boundary="dirichlet")
    op = op_mod.assemble(s)
    rng = np.random.default_rng(5)
    for _ in range(20):
        u = rng.normal(size=s.n)
        assert op_mod.weighted_inner(s, op_mod.apply(op, u), u) < 0
