"""Closed-form reference kernels and spectra used as exact ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SolitonSpec:
    """Linear-potential soliton on R^k: f(x) = <u, x> + v.

    The constant v must not change the kernel (it cancels between the weighted
    measure and the delta normalization); this is asserted as a property, not
    silently dropped.
    """

    k: int
    u: tuple[float, ...]
    v: float = 0.0

    def __post_init__(self):
        if self.k < 1 or len(self.u) != self.k:
            raise ValueError("drift vector length must equal the dimension k")


def soliton_kernel_1d(x: float, y: float, t: float, sign: float = 1.0):
    """Weighted heat kernel of the line with potential f(x) = sign * x:

        H(x,y,t) = e^{sign (x+y)/2} e^{-t/4} (4 pi t)^{-1/2} e^{-|x-y|^2/(4t)}.
    """
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    if sign not in (1.0, -1.0, 1, -1):
        raise ValueError("sign must be +1 or -1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    val = (np.exp(sign * (x + y) / 2.0) * np.exp(-t / 4.0)
           / np.sqrt(4.0 * math.pi * t) * np.exp(-np.abs(x - y) ** 2 / (4.0 * t)))
    return val if val.ndim else float(val)


def product_soliton_kernel(x, y, t: float, spec: SolitonSpec) -> float:
    """Product kernel on R^k with per-coordinate linear potentials u_i x_i.

    Each factor is the line kernel with drift slope a = u_i,

        e^{a(x+y)/2} e^{-a^2 t/4} (4 pi t)^{-1/2} e^{-(x-y)^2/(4t)},

    which reduces to soliton_kernel_1d for a = +-1 and to the Euclidean
    kernel for a = 0.  The additive constant v cancels and is ignored.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (spec.k,) or y.shape != (spec.k,):
        raise ValueError("point dimensions must match the soliton dimension")
    if t <= 0:
        raise ValueError("t must be positive")
    out = 1.0
    for i in range(spec.k):
        a = spec.u[i]
        # mirror the float ops of soliton_kernel_1d so a = +-1 reduces exactly
        out *= (np.exp(a * (x[i] + y[i]) / 2.0) * np.exp(-(a * a * t) / 4.0)
                / np.sqrt(4.0 * math.pi * t)
                * np.exp(-np.abs(x[i] - y[i]) ** 2 / (4.0 * t)))
    return float(out)


def euclidean_kernel(d: float, t: float, n: int):
    """Unweighted Gaussian heat kernel (4 pi t)^{-n/2} e^{-d^2/(4t)}."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("d must be nonnegative")
    t = np.asarray(t, dtype=float)
    val = (4.0 * math.pi * t) ** (-n / 2.0) * np.exp(-d * d / (4.0 * t))
    return val if val.ndim else float(val)


def interval_neumann_spectrum(L: float, k: int) -> float:
    """k-th Neumann eigenvalue of -d^2/dx^2 on [0, L]: (pi k / L)^2."""
    if L <= 0:
        raise ValueError("L must be positive")
    if k < 0:
        raise ValueError("k must be nonnegative")
    return (math.pi * k / L) ** 2
