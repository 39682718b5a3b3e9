"""Conservative-form discrete f-Laplacian L = div_mu (w grad).

The action is

    (Lu)_i = [w_{i+1/2}(u_{i+1}-u_i) - w_{i-1/2}(u_i-u_{i-1})] / mu_i

with face conductances built from midpoint potential samples, so L is exactly
self-adjoint in <u,v>_mu = sum u_i v_i mu_i at any resolution.  L is negative
semidefinite; the heat flow is du/dt = Lu.

Boundary handling: Neumann walls carry zero conductance, Dirichlet walls a
half-cell conductance to an absorbing ghost value 0, periodic grids a wrap
face.  Radial grids always get zero conductance at r = 0 (reflecting core,
automatic since the shell area vanishes there).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import (CIRCLE, DIRICHLET, RADIAL, SpaceError, WeightedSpace,
                    sphere_area)


@dataclass(frozen=True)
class FOperator:
    """Assembled f-Laplacian; immutable, apply() is reentrant."""

    space: WeightedSpace
    conductance: np.ndarray        # interior faces; circle: wrap face last
    wall_conductance: tuple[float, float]  # (inner, outer); 0 under Neumann

    @property
    def n(self) -> int:
        return self.space.n

    def sym_tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of the symmetrized matrix S = -D L D^-1,
        D = diag(sqrt(mu)).  S is positive semidefinite.  Circle wrap term is
        not representable here; use sym_dense() there.
        """
        if self.space.kind == CIRCLE:
            raise SpaceError("circle operators are cyclic, use sym_dense()")
        mu = self.space.cell_measure
        s = np.sqrt(mu)
        w = self.conductance
        diag = np.zeros(self.n)
        diag[:-1] += w
        diag[1:] += w
        diag[0] += self.wall_conductance[0]
        diag[-1] += self.wall_conductance[1]
        diag /= mu
        off = -w / (s[:-1] * s[1:])
        return diag, off

    def sym_dense(self) -> np.ndarray:
        """Dense symmetrized matrix -D L D^-1 (needed for cyclic grids)."""
        mu = self.space.cell_measure
        s = np.sqrt(mu)
        n = self.n
        S = np.zeros((n, n))
        if self.space.kind == CIRCLE:
            w = self.conductance
            for i in range(n):
                j = (i + 1) % n
                S[i, i] += w[i] / mu[i]
                S[j, j] += w[i] / mu[j]
                S[i, j] -= w[i] / (s[i] * s[j])
                S[j, i] = S[i, j]
        else:
            diag, off = self.sym_tridiagonal()
            S[np.arange(n), np.arange(n)] = diag
            S[np.arange(n - 1), np.arange(1, n)] = off
            S[np.arange(1, n), np.arange(n - 1)] = off
        return S

    def tridiagonal_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(sub, diag, sup) of L in the node basis, each length n:
        sub[i] = L[i, i-1] (sub[0] = 0) and sup[i] = L[i, i+1] (sup[-1] = 0).
        Not available for cyclic grids.
        """
        if self.space.kind == CIRCLE:
            raise SpaceError("circle operators are cyclic, use sym_dense()")
        mu = self.space.cell_measure
        w = self.conductance
        diag = np.zeros(self.n)
        diag[:-1] -= w
        diag[1:] -= w
        diag[0] -= self.wall_conductance[0]
        diag[-1] -= self.wall_conductance[1]
        diag /= mu
        sup = np.zeros(self.n)
        sub = np.zeros(self.n)
        sup[:-1] = w / mu[:-1]
        sub[1:] = w / mu[1:]
        return sub, diag, sup


def assemble(space: WeightedSpace) -> FOperator:
    """Assemble the f-Laplacian for a WeightedSpace."""
    h = space.spacing
    weight = np.exp(-space.face_potential)
    if space.kind == RADIAL:
        faces = space.extent[0] + np.arange(1, space.n) * h
        geom = sphere_area(space.dim) * faces ** (space.dim - 1)
        w = geom * weight / h
    else:
        w = weight / h

    inner = outer = 0.0
    if space.boundary == DIRICHLET:
        lo, hi = space.extent
        f_wall = space.potential_spec.sample(np.array([lo, hi]))
        if space.kind == RADIAL:
            # absorbing outer wall only; r = 0 stays reflecting
            outer = sphere_area(space.dim) * hi ** (space.dim - 1) \
                * float(np.exp(-f_wall[1])) / (h / 2.0)
        else:
            inner = float(np.exp(-f_wall[0])) / (h / 2.0)
            outer = float(np.exp(-f_wall[1])) / (h / 2.0)

    return FOperator(space=space, conductance=w, wall_conductance=(inner, outer))


def apply(op: FOperator, u: np.ndarray) -> np.ndarray:
    """Evaluate Lu."""
    u = np.asarray(u, dtype=float)
    if u.shape != (op.n,):
        raise ValueError(f"vector length {u.shape} != node count {op.n}")
    mu = op.space.cell_measure
    out = np.zeros_like(u)
    if op.space.kind == CIRCLE:
        w = op.conductance
        flux = w * (np.roll(u, -1) - u)   # flux through face i (to node i+1)
        out = (flux - np.roll(flux, 1)) / mu
        return out
    w = op.conductance
    flux = w * (u[1:] - u[:-1])
    out[:-1] += flux
    out[1:] -= flux
    out[0] += op.wall_conductance[0] * (0.0 - u[0])
    out[-1] += op.wall_conductance[1] * (0.0 - u[-1])
    return out / mu


def weighted_inner(space: WeightedSpace, u, v) -> float:
    """<u, v>_mu = sum u_i v_i mu_i."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape != (space.n,):
        raise ValueError("vector lengths must match the node count")
    return float(np.sum(u * v * space.cell_measure))


def consistency_residual(op: FOperator, u_exact, lap_exact) -> float:
    """Max interior residual |L u - (u'' - f' u')| for analytic test data.

    Retained as a cross-check of the divergence-form stencil against the
    direct form of the operator; second order in h away from walls.
    """
    x = op.space.nodes
    u = np.asarray(u_exact(x), dtype=float)
    want = np.asarray(lap_exact(x), dtype=float)
    got = apply(op, u)
    interior = slice(1, -1) if op.space.kind != CIRCLE else slice(None)
    return float(np.abs(got[interior] - want[interior]).max())
