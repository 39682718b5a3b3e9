"""mms-heatlab: weighted heat kernels, spectra and Green's functions on
discretized smooth metric measure spaces, with inequality checkers."""

from . import bounds, oracle, space, spectral
from . import operator  # noqa: F401  (shadows stdlib operator only in-package)
from .space import PotentialSpec, WeightedSpace, build_space

__all__ = [
    "space", "operator", "spectral", "oracle", "bounds",
    "PotentialSpec", "WeightedSpace", "build_space",
]

__version__ = "0.1.0"
