"""Discretized weighted spaces: uniform grids carrying the measure e^{-f} dv.

Three geometry families are supported:

* ``interval`` -- a segment [a, b] of the line,
* ``circle``   -- a circle of given circumference (periodic),
* ``radial``   -- the radial quotient of a flat n-dimensional ball, nodes are
  shell radii and cells carry the full shell measure.

All grids are cell-centered: with resolution ``n`` the cells have width
``h = extent / n`` and nodes sit at cell midpoints.  Ball volumes are computed
with fractional boundary cells so that V(r) is continuous and piecewise linear
in r (a flat unit-density interval ball of radius r has volume exactly 2r at
any resolution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import gamma


class SpaceError(ValueError):
    """Base class for space construction errors."""


class NonPositiveMeasure(SpaceError):
    """A cell measure underflowed to zero (potential too large)."""


class InvalidCombination(SpaceError):
    """Geometry, dimension and boundary condition do not fit together."""


INTERVAL = "interval"
CIRCLE = "circle"
RADIAL = "radial"

NEUMANN = "neumann"
DIRICHLET = "dirichlet"
PERIODIC = "periodic"

#: relative tolerance for the uniform-spacing invariant
SPACING_RTOL = 1e-12


def sphere_area(n: int) -> float:
    """Surface area of the unit (n-1)-sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


def unit_ball_volume(m: float) -> float:
    """Volume of the unit ball in dimension m (m may be non-integer)."""
    return math.pi ** (m / 2.0) / gamma(m / 2.0 + 1.0)


@dataclass(frozen=True)
class PotentialSpec:
    """Analytic family for the potential f.

    Families: ``zero``; ``linear`` f = a*x + b; ``quadratic`` f = c*x^2/2;
    ``custom`` with tabulated node values (midpoints by linear interpolation).
    """

    family: str = "zero"
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    table_x: tuple[float, ...] | None = None
    table_f: tuple[float, ...] | None = None

    @staticmethod
    def zero() -> "PotentialSpec":
        return PotentialSpec("zero")

    @staticmethod
    def linear(a: float, b: float = 0.0) -> "PotentialSpec":
        return PotentialSpec("linear", a=a, b=b)

    @staticmethod
    def quadratic(c: float) -> "PotentialSpec":
        return PotentialSpec("quadratic", c=c)

    @staticmethod
    def custom(values, coords=None) -> "PotentialSpec":
        vals = tuple(float(v) for v in values)
        xs = None if coords is None else tuple(float(x) for x in coords)
        return PotentialSpec("custom", table_x=xs, table_f=vals)

    def sample(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "zero":
            return np.zeros_like(x)
        if self.family == "linear":
            return self.a * x + self.b
        if self.family == "quadratic":
            return self.c * x * x / 2.0
        if self.family == "custom":
            if self.table_x is None:
                raise SpaceError("custom potential not anchored to coordinates")
            return np.interp(x, self.table_x, self.table_f)
        raise SpaceError(f"unknown potential family {self.family!r}")

    def describe(self) -> str:
        if self.family == "zero":
            return "f=0"
        if self.family == "linear":
            return f"f={self.a:g}x{self.b:+g}" if self.b else f"f={self.a:g}x"
        if self.family == "quadratic":
            return f"f={self.c:g}x^2/2"
        return "f=custom"


class BallVolume(NamedTuple):
    value: float
    clipped: bool


class PotentialStats(NamedTuple):
    A: float
    Aprime: float
    clipped: bool


@dataclass(frozen=True)
class CurvatureProfile:
    """Scalar Ric_f along the distinguished direction (f'' on a flat base)."""

    ricf: np.ndarray
    kappa: float


@dataclass(frozen=True)
class WeightedSpace:
    """Immutable discretized smooth metric measure space."""

    kind: str
    dim: int
    nodes: np.ndarray          # cell-center coordinates, uniform spacing
    spacing: float             # h
    potential: np.ndarray      # f at nodes
    face_potential: np.ndarray  # f at interior faces (circle: wrap face last)
    cell_measure: np.ndarray   # mu_i > 0
    boundary: str
    extent: tuple[float, float]  # coordinate range covered by the cells
    potential_spec: PotentialSpec

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def total_volume(self) -> float:
        return float(self.cell_measure.sum())

    @property
    def circumference(self) -> float:
        if self.kind != CIRCLE:
            raise SpaceError("circumference only defined for circles")
        return self.extent[1] - self.extent[0]

    @property
    def diameter(self) -> float:
        """Metric diameter of the represented manifold (radial: full ball)."""
        lo, hi = self.extent
        if self.kind == CIRCLE:
            return (hi - lo) / 2.0
        if self.kind == RADIAL:
            return 2.0 * hi
        return hi - lo

    def distance(self, x: float, y: float) -> float:
        """Arclength distance between coordinates (circle: shorter arc)."""
        d = abs(x - y)
        if self.kind == CIRCLE:
            circ = self.extent[1] - self.extent[0]
            d = d % circ
            d = min(d, circ - d)
        return d

    def distances_from(self, center: float) -> np.ndarray:
        """Distance of every node from a coordinate."""
        d = np.abs(self.nodes - center)
        if self.kind == CIRCLE:
            circ = self.extent[1] - self.extent[0]
            d = d % circ
            d = np.minimum(d, circ - d)
        return d

    def node_index(self, x: float) -> int:
        """Index of the node at coordinate x (must lie within half a cell)."""
        lo, hi = self.extent
        if self.kind == CIRCLE:
            x = lo + (x - lo) % (hi - lo)
        i = int(round((x - lo) / self.spacing - 0.5))
        i = min(max(i, 0), self.n - 1)
        if abs(self.nodes[i] - x) > 0.5 * self.spacing * (1 + 1e-9):
            raise SpaceError(f"coordinate {x} does not hit a node")
        return i


def build_space(kind: str, dim: int, extent, resolution: int,
                potential: PotentialSpec, boundary: str) -> WeightedSpace:
    """Construct a WeightedSpace.

    ``extent`` is ``(a, b)`` for intervals, the circumference for circles and
    the outer radius for radial spaces.  ``resolution`` is the cell count.
    """
    if resolution < 8:
        raise SpaceError(f"resolution {resolution} < 8")
    kind = kind.lower()
    boundary = boundary.lower()

    if kind == INTERVAL:
        if dim != 1:
            raise InvalidCombination("interval spaces are 1-dimensional")
        if boundary == PERIODIC:
            raise InvalidCombination("periodic boundary requires a circle")
        a, b = (float(extent[0]), float(extent[1])) if np.iterable(extent) \
            else (-float(extent), float(extent))
        if not b > a:
            raise SpaceError("empty interval")
        lo, hi = a, b
    elif kind == CIRCLE:
        if dim != 1:
            raise InvalidCombination("circle spaces are 1-dimensional")
        if boundary != PERIODIC:
            raise InvalidCombination("circles must be periodic")
        circ = float(extent)
        if not circ > 0:
            raise SpaceError("circumference must be positive")
        lo, hi = 0.0, circ
    elif kind == RADIAL:
        if dim < 2:
            raise InvalidCombination("radial spaces require dim >= 2")
        if boundary == PERIODIC:
            raise InvalidCombination("radial spaces cannot be periodic")
        radius = float(extent)
        if not radius > 0:
            raise SpaceError("radius must be positive")
        lo, hi = 0.0, radius
    else:
        raise SpaceError(f"unknown space kind {kind!r}")

    h = (hi - lo) / resolution
    nodes = lo + (np.arange(resolution) + 0.5) * h

    if potential.family == "custom" and potential.table_x is None:
        if potential.table_f is None or len(potential.table_f) != resolution:
            raise SpaceError("custom potential table must match node count")
        potential = replace(potential, table_x=tuple(nodes))

    f = potential.sample(nodes)
    if kind == CIRCLE:
        # face k sits between node k and node k+1; last face wraps to node 0
        faces = lo + (np.arange(1, resolution + 1)) * h
    else:
        faces = lo + np.arange(1, resolution) * h
    f_faces = potential.sample(faces)

    with np.errstate(over="ignore", under="ignore"):
        weight = np.exp(-f)
        if kind == RADIAL:
            mu = sphere_area(dim) * nodes ** (dim - 1) * weight * h
        else:
            mu = weight * h
    if not np.all(mu > 0.0) or not np.all(np.isfinite(mu)):
        raise NonPositiveMeasure("e^{-f} underflowed or overflowed on a cell")

    return WeightedSpace(
        kind=kind, dim=dim, nodes=nodes, spacing=h, potential=f,
        face_potential=f_faces, cell_measure=mu, boundary=boundary,
        extent=(lo, hi), potential_spec=potential)


def refine(space: WeightedSpace, factor: int = 2) -> WeightedSpace:
    """Rebuild the space with ``factor`` times the resolution (h -> h/factor)."""
    if space.kind == INTERVAL:
        extent = space.extent
    elif space.kind == CIRCLE:
        extent = space.extent[1] - space.extent[0]
    else:
        extent = space.extent[1]
    return build_space(space.kind, space.dim, extent, space.n * factor,
                       space.potential_spec, space.boundary)


def _segment_cover(space: WeightedSpace, lo: float, hi: float) -> np.ndarray:
    """Fraction of each cell covered by the coordinate segment [lo, hi]."""
    h = space.spacing
    left = space.nodes - 0.5 * h
    right = space.nodes + 0.5 * h
    overlap = np.minimum(right, hi) - np.maximum(left, lo)
    return np.clip(overlap / h, 0.0, 1.0)


def ball_volume(space: WeightedSpace, center: float, radius: float) -> BallVolume:
    """Weighted volume of the metric ball, boundary cells counted fractionally.

    The ball is clipped to the domain; the flag records whether clipping (or,
    on a circle, full wrap-around) occurred.
    """
    if radius <= 0:
        raise SpaceError("radius must be positive")
    lo, hi = space.extent
    if space.kind == CIRCLE:
        circ = hi - lo
        clipped = radius >= circ / 2.0
        if clipped:
            return BallVolume(space.total_volume, True)
        c = lo + (center - lo) % circ
        frac = np.zeros(space.n)
        for shift in (-circ, 0.0, circ):
            frac += _segment_cover(space, c - radius + shift, c + radius + shift)
        frac = np.clip(frac, 0.0, 1.0)
        return BallVolume(float(space.cell_measure @ frac), False)

    seg_lo, seg_hi = center - radius, center + radius
    if space.kind == RADIAL:
        # the origin side is manifold interior, only the outer wall clips
        clipped = seg_hi > hi * (1 + 1e-12)
        seg_lo = max(seg_lo, lo)
    else:
        clipped = seg_lo < lo - 1e-12 * (hi - lo) or seg_hi > hi + 1e-12 * (hi - lo)
    frac = _segment_cover(space, seg_lo, seg_hi)
    return BallVolume(float(space.cell_measure @ frac), bool(clipped))


def potential_gradient(space: WeightedSpace) -> np.ndarray:
    """|f'| stencil input: centered differences, one-sided at walls."""
    f = space.potential
    h = space.spacing
    if space.kind == CIRCLE:
        return (np.roll(f, -1) - np.roll(f, 1)) / (2 * h)
    g = np.empty_like(f)
    g[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    g[0] = (f[1] - f[0]) / h
    g[-1] = (f[-1] - f[-2]) / h
    return g


def potential_stats(space: WeightedSpace, center: float, R: float) -> PotentialStats:
    """A = sup |f| and A' = sup |f'| over the ball of radius 3R around center.

    The ball is clipped to the domain; the flag records clipping.
    """
    if R <= 0:
        raise SpaceError("R must be positive")
    d = space.distances_from(center)
    mask = d <= 3.0 * R * (1 + 1e-12)
    if not mask.any():
        raise SpaceError("no nodes within 3R of center")
    A = float(np.abs(space.potential[mask]).max())
    Aprime = float(np.abs(potential_gradient(space)[mask]).max())
    lo, hi = space.extent
    if space.kind == CIRCLE:
        clipped = 3.0 * R >= (hi - lo) / 2.0
    elif space.kind == RADIAL:
        clipped = center + 3.0 * R > hi * (1 + 1e-12)
    else:
        clipped = center - 3.0 * R < lo - 1e-12 or center + 3.0 * R > hi + 1e-12
    return PotentialStats(A, Aprime, bool(clipped))


def curvature_profile(space: WeightedSpace) -> CurvatureProfile:
    """Ric_f along the distinguished direction: f'' by centered differences.

    kappa = max(0, -min Ric_f), the lower-bound coefficient in Ric_f >= -kappa;
    values below the second-difference round-off floor are snapped to 0 so
    that e.g. linear potentials report kappa = 0 exactly.
    """
    f = space.potential
    h = space.spacing
    if space.kind == CIRCLE:
        ricf = (np.roll(f, -1) - 2 * f + np.roll(f, 1)) / h**2
    else:
        ricf = np.empty_like(f)
        ricf[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
        # one-sided 3-point second difference, exact for quadratics
        ricf[0] = (f[2] - 2 * f[1] + f[0]) / h**2
        ricf[-1] = (f[-1] - 2 * f[-2] + f[-3]) / h**2
    kappa = max(0.0, -float(ricf.min()))
    floor = 64.0 * np.finfo(float).eps * max(1.0, float(np.abs(f).max())) / h**2
    if kappa < floor:
        kappa = 0.0
    return CurvatureProfile(ricf=ricf, kappa=kappa)


def model_volume_bounds(m: float, K: float, r: float) -> tuple[float, float]:
    """Two-sided estimate for the radius-r ball volume in the curvature -K
    model space of (possibly non-integer) dimension m:

        omega_m r^m  <=  V  <=  omega_m r^m e^{(m-1) sqrt(K) r}.
    """
    if m < 1:
        raise SpaceError(f"model dimension m={m} < 1")
    if K < 0 or r <= 0:
        raise SpaceError("need K >= 0 and r > 0")
    base = unit_ball_volume(m) * r ** m
    return base, base * math.exp((m - 1.0) * math.sqrt(K) * r)
