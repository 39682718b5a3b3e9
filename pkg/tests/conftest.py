import numpy as np
import pytest

from mms_heatlab import operator as op_mod
from mms_heatlab import space as sp
from mms_heatlab import spectral as spl


def make_space(kind="interval", dim=1, extent=(-12.0, 12.0), resolution=768,
               potential=None, boundary="neumann"):
    potential = potential or sp.PotentialSpec.zero()
    return sp.build_space(kind, dim, extent, resolution, potential, boundary)


@pytest.fixture(scope="session")
def flat_line():
    return make_space()


@pytest.fixture(scope="session")
def soliton_line():
    return make_space(potential=sp.PotentialSpec.linear(1.0))


@pytest.fixture(scope="session")
def circle_2pi():
    return make_space("circle", extent=2 * np.pi, resolution=256,
                      boundary="periodic")


@pytest.fixture(scope="session")
def radial3():
    return make_space("radial", dim=3, extent=1.0, resolution=256)


@pytest.fixture(scope="session")
def flat_spec(flat_line):
    return spl.decompose(op_mod.assemble(flat_line))


@pytest.fixture(scope="session")
def soliton_spec(soliton_line):
    return spl.decompose(op_mod.assemble(soliton_line))


@pytest.fixture(scope="session")
def circle_spec(circle_2pi):
    return spl.decompose(op_mod.assemble(circle_2pi))
