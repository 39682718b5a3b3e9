"""Eigendecomposition of the f-Laplacian and everything built on it:
heat kernel, semigroup, Green's function, and an independent Crank-Nicolson
time stepper used as a cross-check.

The symmetrized matrix S = -D L D^{-1} (D = diag(sqrt(mu))) is tridiagonal
(cyclic-tridiagonal on circles); its eigenpairs (lambda_k, psi_k) give the
mu-orthonormal modes phi_k = psi_k / sqrt(mu) of -L.  On conservation grids
(Neumann/periodic) the exact kernel vector is the constant, so mode 0 is
pinned to phi_0 = V_f^{-1/2} 1 with lambda_0 = 0 and the remaining modes are
re-orthogonalized against it; this keeps mass identities good to ~1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import operator as op_mod
from . import space as space_mod
from .operator import FOperator
from .space import DIRICHLET, WeightedSpace

DEFAULT_SIZE_CAP = 8192
#: kernel evaluations below t = T_FLOOR_FACTOR * h^2 are refused as
#: physically under-resolved (the spectral sum itself stays exact)
T_FLOOR_FACTOR = 4.0


class ConvergenceFailure(RuntimeError):
    """The eigensolver failed to converge (reported, never silent)."""


@dataclass(frozen=True)
class SpectralData:
    """Eigenpairs of -L, mu-orthonormal, eigenvalues ascending."""

    operator: FOperator
    eigenvalues: np.ndarray    # shape (n,)
    eigenvectors: np.ndarray   # shape (n, n), column k = phi_k

    @property
    def space(self) -> WeightedSpace:
        return self.operator.space

    @property
    def conserving(self) -> bool:
        """True when constants are harmonic (Neumann/periodic walls)."""
        return self.space.boundary != DIRICHLET

    @property
    def lambda1_bottom(self) -> float:
        """Smallest nonzero eigenvalue (Neumann/periodic) or lambda_0
        (Dirichlet)."""
        return float(self.eigenvalues[1 if self.conserving else 0])

    @property
    def spectrum_bottom(self) -> float:
        """Bottom of the L^2_mu spectrum: 0 on conservation grids."""
        return 0.0 if self.conserving else float(self.eigenvalues[0])

    def t_floor(self, factor: float = T_FLOOR_FACTOR) -> float:
        return factor * self.space.spacing ** 2


@dataclass(frozen=True)
class KernelSample:
    """One kernel evaluation with the context the bound checkers consume."""

    x: float
    y: float
    t: float
    H: float
    d: float
    Vx: float
    Vy: float
    A: float
    Aprime: float
    kappa: float


@dataclass(frozen=True)
class SamplePlan:
    """Where to evaluate the kernel: (x, y, t) triples around an origin.

    ``horizon`` is the radius R of the sampling context; A and A' are the
    potential stats over the 3R ball around the origin.
    """

    origin: float
    horizon: float
    triples: tuple[tuple[float, float, float], ...]

    @staticmethod
    def product(origin: float, horizon: float, xs: Sequence[float],
                ys: Sequence[float], ts: Sequence[float]) -> "SamplePlan":
        trips = tuple((float(x), float(y), float(t))
                      for t in ts for x in xs for y in ys)
        return SamplePlan(float(origin), float(horizon), trips)


def decompose(op: FOperator, size_cap: int = DEFAULT_SIZE_CAP) -> SpectralData:
    """Full eigendecomposition of -L.

    Dense tridiagonal (or cyclic) solve; raises ConvergenceFailure if LAPACK
    does not converge and ValueError above the size cap.
    """
    n = op.n
    if n > size_cap:
        raise ValueError(f"grid size {n} exceeds the eigensolver cap {size_cap}")
    try:
        if op.space.kind == space_mod.CIRCLE:
            vals, psi = scipy.linalg.eigh(op.sym_dense())
        else:
            diag, off = op.sym_tridiagonal()
            vals, psi = scipy.linalg.eigh_tridiagonal(diag, off)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise ConvergenceFailure(f"eigensolver failed: {exc}") from exc

    vals = np.maximum(vals, 0.0)
    mu = op.space.cell_measure
    sqmu = np.sqrt(mu)

    if op.space.boundary != DIRICHLET:
        # pin the exact kernel mode and re-orthogonalize the rest against it
        psi0 = sqmu / np.linalg.norm(sqmu)
        vals[0] = 0.0
        psi[:, 0] = psi0
        rest = psi[:, 1:]
        rest -= np.outer(psi0, psi0 @ rest)
        rest /= np.linalg.norm(rest, axis=0)

    # deterministic sign: first non-negligible component positive
    for k in range(n):
        col = psi[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-8 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            psi[:, k] = -col

    phi = psi / sqmu[:, None]
    return SpectralData(operator=op, eigenvalues=vals, eigenvectors=phi)


def _check_t(spec: SpectralData, t: float, t_floor_factor: float) -> None:
    if t <= 0:
        raise ValueError("t must be positive")
    floor = spec.t_floor(t_floor_factor)
    if t < floor:
        raise ValueError(
            f"t={t:g} is below the resolved-time floor {floor:g}; "
            "refine the grid or lower the floor factor")


def heat_kernel(spec: SpectralData, x: float, y: float, t: float,
                t_floor_factor: float = T_FLOOR_FACTOR) -> float:
    """H(x, y, t) = sum_k e^{-lambda_k t} phi_k(x) phi_k(y)."""
    _check_t(spec, t, t_floor_factor)
    ix = spec.space.node_index(x)
    iy = spec.space.node_index(y)
    w = np.exp(-spec.eigenvalues * t)
    return float((spec.eigenvectors[ix] * w) @ spec.eigenvectors[iy])


def heat_kernel_grid(spec: SpectralData, idx: np.ndarray, t: float,
                     t_floor_factor: float = T_FLOOR_FACTOR) -> np.ndarray:
    """Kernel matrix H(x_i, x_j, t) over node indices idx."""
    _check_t(spec, t, t_floor_factor)
    w = np.exp(-spec.eigenvalues * t)
    block = spec.eigenvectors[np.asarray(idx, dtype=int)]
    return (block * w) @ block.T


def semigroup_apply(spec: SpectralData, u0: np.ndarray, t: float) -> np.ndarray:
    """e^{tL} u0 via the spectral expansion; t = 0 returns u0 to round-off."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (spec.space.n,):
        raise ValueError("initial data length must match the node count")
    coeff = spec.eigenvectors.T @ (u0 * spec.space.cell_measure)
    return spec.eigenvectors @ (coeff * np.exp(-spec.eigenvalues * t))


def green_function(spec: SpectralData, x: float, y: float) -> float:
    """G(x, y) = sum_{lambda_k > 0} phi_k(x) phi_k(y) / lambda_k.

    Returns math.inf (the divergence flag) when the constant mode carries
    weight, i.e. on any Neumann/periodic grid.
    """
    if spec.conserving:
        return math.inf
    ix = spec.space.node_index(x)
    iy = spec.space.node_index(y)
    lam = spec.eigenvalues
    if lam[0] <= 0:
        return math.inf
    return float((spec.eigenvectors[ix] / lam) @ spec.eigenvectors[iy])


def green_time_quadrature(spec: SpectralData, x: float, y: float,
                          T: float) -> tuple[float, float]:
    """Cross-check route: integral of H over [0, T] plus an explicit tail
    bound sqrt(H(x,x,T) H(y,y,T)) / lambda_min for the discarded [T, inf).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    ix = spec.space.node_index(x)
    iy = spec.space.node_index(y)
    lam = spec.eigenvalues
    if spec.conserving or lam[0] <= 0:
        raise ValueError("time quadrature needs a strictly positive spectrum")
    px, py = spec.eigenvectors[ix], spec.eigenvectors[iy]
    value = float((px * (1.0 - np.exp(-lam * T)) / lam) @ py)
    hx = float((px * np.exp(-lam * T)) @ px)
    hy = float((py * np.exp(-lam * T)) @ py)
    tail = math.sqrt(max(hx, 0.0) * max(hy, 0.0)) / lam[0]
    return value, tail


def crank_nicolson_evolve(op: FOperator, u0: np.ndarray, t: float,
                          steps: int) -> np.ndarray:
    """Trapezoidal implicit stepping of du/dt = Lu; O(dt^2) accurate and
    exactly mass-conserving on Neumann/periodic grids.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    u = np.array(u0, dtype=float)
    if u.shape != (op.n,):
        raise ValueError("initial data length must match the node count")
    if t == 0:
        return u
    dt = t / steps

    if op.space.kind == space_mod.CIRCLE:
        n = op.n
        mu = op.space.cell_measure
        w = op.conductance
        rows, cols, vals = [], [], []
        for i in range(n):
            j = (i + 1) % n
            rows += [i, j, i, j]
            cols += [i, j, j, i]
            vals += [-w[i] / mu[i], -w[i] / mu[j], w[i] / mu[i], w[i] / mu[j]]
        L = scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        A = (scipy.sparse.identity(n, format="csc") - (dt / 2.0) * L)
        B = (scipy.sparse.identity(n, format="csc") + (dt / 2.0) * L)
        lu = scipy.sparse.linalg.splu(A)
        for _ in range(steps):
            u = lu.solve(B @ u)
        return u

    sub, diag, sup = op.tridiagonal_rows()
    ab = np.zeros((3, op.n))
    ab[0, 1:] = -(dt / 2.0) * sup[:-1]
    ab[1, :] = 1.0 - (dt / 2.0) * diag
    ab[2, :-1] = -(dt / 2.0) * sub[1:]
    for _ in range(steps):
        rhs = u + (dt / 2.0) * op_mod.apply(op, u)
        u = scipy.linalg.solve_banded((1, 1), ab, rhs)
    return u


def kernel_sample_grid(spec: SpectralData, plan: SamplePlan,
                       t_floor_factor: float = T_FLOOR_FACTOR,
                       ) -> list[KernelSample]:
    """Evaluate the kernel on a plan and attach the bound-checker context:
    distance, sqrt(t)-ball volumes and the (A, A', kappa) stats of the plan's
    origin/horizon.
    """
    space = spec.space
    stats = space_mod.potential_stats(space, plan.origin, plan.horizon)
    kappa = space_mod.curvature_profile(space).kappa
    samples = []
    for (x, y, t) in plan.triples:
        xi = space.nodes[space.node_index(x)]
        yi = space.nodes[space.node_index(y)]
        H = heat_kernel(spec, xi, yi, t, t_floor_factor)
        rt = math.sqrt(t)
        samples.append(KernelSample(
            x=float(xi), y=float(yi), t=float(t), H=H,
            d=space.distance(xi, yi),
            Vx=space_mod.ball_volume(space, xi, rt).value,
            Vy=space_mod.ball_volume(space, yi, rt).value,
            A=stats.A, Aprime=stats.Aprime, kappa=kappa))
    return samples
