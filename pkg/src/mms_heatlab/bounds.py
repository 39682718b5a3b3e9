"""Inequality checkers: deficits, fitted constant budgets, verdicts.

Every check works on the log scale.  A check produces per-sample *deficits*
and a *budget form* (a small nonnegative feature basis whose first column is
the constant 1).  The theorems assert budgets with existential constants, so
no constant is ever hardcoded; instead

* verdict ``Holds`` means the deficit is <= 0 everywhere (unit constants
  suffice),
* ``HoldsWithFitted`` means constants fitted on a calibration half of the
  samples cover the held-out half within a multiplicative margin (default
  1.2x) and no shape guard tripped,
* ``Violated`` means a held-out sample escapes every admissible budget
  (a shape failure), never merely that a fitted constant is large,
* ``Skipped`` records a precondition gate (clipped ball, kappa = 0, ...).

Constant-free checks (Davies, doubling, annulus, ball shift) compare the two
sides directly, with a small slack for the O(h^2) discretization wobble of
fractional-cell volumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import space as space_mod
from . import spectral as spectral_mod
from .space import WeightedSpace, ball_volume, curvature_profile, potential_stats
from .spectral import KernelSample, SpectralData

HOLDS = "Holds"
HOLDS_WITH_FITTED = "HoldsWithFitted"
VIOLATED = "Violated"
SKIPPED = "Skipped"

PARABOLIC = "Parabolic"
NONPARABOLIC = "Nonparabolic"

DEFAULT_MARGIN = 1.2
#: positive trend of the small-t deficit (per unit log(1/t)) that flags a
#: shape failure; genuine kernels keep the on-diagonal deficit bounded
SHAPE_SLOPE_TOL = 0.1
HOLDS_TOL = 1e-9


class EmptySamples(ValueError):
    """A checker was fed no samples."""


class DegenerateCylinder(ValueError):
    """A parabolic cylinder contains no grid points."""


class InconclusiveTail(RuntimeError):
    """Power and exponential tail fits disagree with comparable quality."""


@dataclass
class BoundReport:
    """Per-inequality verdict with deficits and fitted constants.

    ``worst_deficit`` is on the log scale; ``stability_pct`` is the relative
    change of fitted constants under h -> h/2 (filled by the refinement
    runner, see refinement_stability).
    """

    inequality: str
    n_samples: int
    worst_deficit: float
    fitted: dict[str, float]
    budget_form: str
    verdict: str
    stability_pct: float | None = None
    flags: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ParabolicCylinders:
    """Space-time boxes for the Harnack check around (center, top time s):

        Q  = B(r)       x (s - r^2, s)
        Q- = B(delta r) x (s - delta r^2, s - eta r^2)
        Q+ = B(delta r) x (s - eps r^2, s)

    with 0 < eps < eta < delta < 1 strictly.
    """

    center: float
    radius: float
    top: float
    eps: float = 0.2
    eta: float = 0.4
    delta: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.eps < self.eta < self.delta < 1.0):
            raise ValueError("need 0 < eps < eta < delta < 1 strictly")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.top - self.radius ** 2 < 0:
            raise ValueError("cylinder bottom s - r^2 must not precede t = 0")

    def minus_window(self) -> tuple[float, float]:
        r2 = self.radius ** 2
        return self.top - self.delta * r2, self.top - self.eta * r2

    def plus_window(self) -> tuple[float, float]:
        return self.top - self.eps * self.radius ** 2, self.top


# ---------------------------------------------------------------------------
# envelope fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    names: tuple[str, ...]
    coeffs: np.ndarray
    max_budget: float
    degenerate: bool

    def budget(self, basis: np.ndarray) -> np.ndarray:
        return np.asarray(basis, dtype=float) @ self.coeffs

    def as_dict(self) -> dict[str, float]:
        return {n: float(c) for n, c in zip(self.names, self.coeffs)}


def fit_constants(deficits, basis, names: Sequence[str]) -> FitResult:
    """Least-upper-envelope fit: minimize the maximum budget subject to
    basis @ c >= deficits, ties broken lexicographically in basis order
    (earlier coefficients minimized first).

    Column 0 must be the constant term (sign-free); later columns are
    budget slopes, constrained nonnegative.  Columns with no spread are
    dropped (coefficient 0).  The fit is flagged degenerate when there are
    fewer samples than active coefficients plus one.
    """
    v = np.asarray(deficits, dtype=float)
    B = np.asarray(basis, dtype=float)
    if v.ndim != 1 or B.shape != (v.size, len(names)):
        raise ValueError("basis must be (n_samples, n_names)")
    if v.size == 0:
        raise EmptySamples("no deficit samples to fit")

    p = len(names)
    active = [0]
    for j in range(1, p):
        col = B[:, j]
        if np.ptp(col) > 1e-9 * max(1.0, np.abs(col).max()):
            active.append(j)
    A = B[:, active]
    k = len(active)
    degenerate = v.size < k + 1

    # variables z = (c_active, M); cover: -A c <= -v; cap: A c - M <= 0
    n_rows = v.size
    A_ub = np.zeros((2 * n_rows, k + 1))
    A_ub[:n_rows, :k] = -A
    A_ub[n_rows:, :k] = A
    A_ub[n_rows:, k] = -1.0
    b_ub = np.concatenate([-v, np.zeros(n_rows)])
    bounds = [(None, None)] + [(0.0, None)] * (k - 1) + [(None, None)]

    def solve(cvec, extra_A=None, extra_b=None):
        Au, bu = A_ub, b_ub
        if extra_A is not None:
            Au = np.vstack([A_ub, extra_A])
            bu = np.concatenate([b_ub, extra_b])
        res = linprog(cvec, A_ub=Au, b_ub=bu, bounds=bounds, method="highs")
        if not res.success:
            raise RuntimeError(f"envelope fit LP failed: {res.message}")
        return res.x

    obj = np.zeros(k + 1)
    obj[k] = 1.0
    x = solve(obj)
    m_star = x[k]
    # pin slack must stay above the solver's feasibility tolerance
    slack = lambda val: 1e-6 * max(1.0, abs(val))

    pins_A, pins_b = [], []
    row = np.zeros(k + 1)
    row[k] = 1.0
    pins_A.append(row.copy())
    pins_b.append(m_star + slack(m_star))
    for j in range(k):
        obj = np.zeros(k + 1)
        obj[j] = 1.0
        x = solve(obj, np.array(pins_A), np.array(pins_b))
        row = np.zeros(k + 1)
        row[j] = 1.0
        pins_A.append(row.copy())
        pins_b.append(x[j] + slack(x[j]))

    coeffs = np.zeros(p)
    for idx, j in enumerate(active):
        coeffs[j] = x[idx]
    return FitResult(tuple(names), coeffs, float(m_star), degenerate)


def _small_t_trend(ts: np.ndarray, deficits: np.ndarray) -> float | None:
    """Slope of the per-t max deficit against log(1/t), fitted on the small-t
    half of the t-range only (bounded deficits may still drift on moderate t
    scales, e.g. through an honest e^{-t/4} factor).  None when the small-t
    half has too little spread to judge.
    """
    order = {}
    for t, d in zip(ts, deficits):
        key = round(float(t), 12)
        order[key] = max(order.get(key, -math.inf), float(d))
    t_vals = np.array(sorted(order))
    if t_vals.size < 3 or t_vals[-1] / t_vals[0] < 2.0:
        return None
    t_split = math.sqrt(t_vals[0] * t_vals[-1])
    small = t_vals[t_vals <= t_split * (1 + 1e-12)]
    if small.size < 3 or small[-1] / small[0] < 2.0:
        return None
    x = np.log(1.0 / small)
    y = np.array([order[round(float(t), 12)] for t in small])
    return float(np.polyfit(x, y, 1)[0])


def _split_verdict(deficits: np.ndarray, basis: np.ndarray,
                   names: Sequence[str], margin: float,
                   guard_slope: float | None) -> tuple[str, FitResult, list[str]]:
    """Common verdict logic: full fit for reporting, even/odd split for the
    coverage test, optional small-t shape guard."""
    flags: list[str] = []
    fit_all = fit_constants(deficits, basis, names)
    if fit_all.degenerate:
        flags.append("DegenerateFit")
    worst = float(deficits.max())

    if guard_slope is not None and guard_slope > SHAPE_SLOPE_TOL:
        flags.append("ShapeDivergence")
        return VIOLATED, fit_all, flags

    if worst <= HOLDS_TOL:
        return HOLDS, fit_all, flags

    cal_idx = np.arange(0, deficits.size, 2)
    hold_idx = np.arange(1, deficits.size, 2)
    if hold_idx.size == 0 or cal_idx.size < 2:
        flags.append("NoHoldout")
        return HOLDS_WITH_FITTED, fit_all, flags
    fit_cal = fit_constants(deficits[cal_idx], basis[cal_idx], names)
    budget = fit_cal.budget(basis[hold_idx])
    if np.all(deficits[hold_idx] <= budget + math.log(margin)):
        return HOLDS_WITH_FITTED, fit_all, flags
    flags.append("HoldoutEscape")
    return VIOLATED, fit_all, flags


def _as_arrays(samples: Sequence[KernelSample]):
    if len(samples) == 0:
        raise EmptySamples("no kernel samples")
    get = lambda name: np.array([getattr(s, name) for s in samples], dtype=float)
    return get("H"), get("d"), get("t"), get("Vx"), get("Vy"), \
        get("A"), get("Aprime"), get("kappa")


# ---------------------------------------------------------------------------
# Gaussian kernel bounds
# ---------------------------------------------------------------------------

def gaussian_upper_check(samples: Sequence[KernelSample], eps: float = 1.0,
                         margin: float = DEFAULT_MARGIN) -> BoundReport:
    """Two-sided Gaussian bound, upper side.  Budget form

        H sqrt(Vx Vy) e^{d^2/((4+eps)t)}  <=  c1 e^{c2 A + c3 (1+A) sqrt(kappa t)}.

    Deficits are the log of the left side; the shape guard flags deficits
    that grow as t -> 0 (no admissible constants exist in that limit).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    H, d, t, Vx, Vy, A, Ap, kap = _as_arrays(samples)
    if np.any(H <= 0):
        raise ValueError("upper check needs positive kernel values")
    deficits = (np.log(H) + 0.5 * np.log(Vx) + 0.5 * np.log(Vy)
                + d * d / ((4.0 + eps) * t))
    basis = np.column_stack([np.ones_like(t), A, (1.0 + A) * np.sqrt(kap * t)])
    names = ("log_c1", "c2", "c3")
    slope = _small_t_trend(t, deficits)
    verdict, fit, flags = _split_verdict(deficits, basis, names, margin, slope)
    fitted = {"c1": math.exp(fit.coeffs[0]), "c2": float(fit.coeffs[1]),
              "c3": float(fit.coeffs[2])}
    return BoundReport(
        inequality="gaussian_upper", n_samples=len(samples),
        worst_deficit=float(deficits.max()), fitted=fitted,
        budget_form="c1*exp(c2*A + c3*(1+A)*sqrt(kappa*t))",
        verdict=verdict, flags=flags,
        details={"eps": eps, "trend_slope": slope,
                 "max_budget": fit.max_budget})


def fit_saturation_rate(ts, hv) -> float:
    """Exponential decay rate c5 of H(x,x,t) V(B(sqrt t)) ~ e^{-c5 t}.

    Least squares of -log(H V) on {t, sqrt t, log t, 1}: the sqrt t and log t
    columns absorb the sub-exponential volume growth and the kernel prefactor
    so the coefficient of t isolates the pure rate.
    """
    ts = np.asarray(ts, dtype=float)
    hv = np.asarray(hv, dtype=float)
    if ts.size < 5:
        raise ValueError("need at least 5 samples to fit a decay rate")
    X = np.column_stack([ts, np.sqrt(ts), np.log(ts), np.ones_like(ts)])
    coef, *_ = np.linalg.lstsq(X, -np.log(hv), rcond=None)
    return float(coef[0])


def _diagonal_guard(samples, deficits) -> float | None:
    """Shape guard input for the lower bounds: trend of the on-diagonal
    deficit only (off-diagonal deficits legitimately grow like d^2/t)."""
    mask = np.array([s.d <= 1e-12 for s in samples])
    if mask.sum() < 3:
        return None
    ts = np.array([s.t for s in samples])[mask]
    return _small_t_trend(ts, deficits[mask])


def gaussian_lower_check(samples: Sequence[KernelSample],
                         margin: float = DEFAULT_MARGIN) -> BoundReport:
    """Two-sided Gaussian bound, lower side.  Budget form

        1/(H Vx)  <=  (1/c4) e^{c5 (A'^2+kappa) t} e^{d^2/(c6 t)}.

    When the plan contains on-diagonal samples with a t-spread of at least
    a factor 4 the saturation rate of H V is fitted as the sharpness
    witness (soliton: rate -> 1/4).
    """
    H, d, t, Vx, Vy, A, Ap, kap = _as_arrays(samples)
    if np.any(H <= 0):
        return BoundReport(
            inequality="gaussian_lower", n_samples=len(samples),
            worst_deficit=math.inf, fitted={}, budget_form="",
            verdict=VIOLATED, flags=["NonPositiveKernel"])
    deficits = -np.log(H) - np.log(Vx)
    basis = np.column_stack([np.ones_like(t), (Ap * Ap + kap) * t, d * d / t])
    names = ("neg_log_c4", "c5", "inv_c6")
    slope = _diagonal_guard(samples, deficits)
    verdict, fit, flags = _split_verdict(deficits, basis, names, margin, slope)
    inv_c6 = fit.coeffs[2]
    fitted = {"c4": math.exp(-fit.coeffs[0]), "c5": float(fit.coeffs[1]),
              "c6": (math.inf if inv_c6 <= 0 else float(1.0 / inv_c6))}
    details = {"trend_slope": slope, "max_budget": fit.max_budget}

    diag = [s for s in samples if s.d <= 1e-12]
    ts = np.array([s.t for s in diag])
    if len(diag) >= 5 and ts.max() / ts.min() >= 4.0:
        hv = np.array([s.H * s.Vx for s in diag])
        details["saturation_rate"] = fit_saturation_rate(ts, hv)

    return BoundReport(
        inequality="gaussian_lower", n_samples=len(samples),
        worst_deficit=float(deficits.max()), fitted=fitted,
        budget_form="c4*exp(-c5*(Aprime^2+kappa)*t)*exp(-d^2/(c6*t))/Vx",
        verdict=verdict, flags=flags, details=details)


def alt_lower_check(samples: Sequence[KernelSample],
                    margin: float = DEFAULT_MARGIN) -> BoundReport:
    """Alternate lower bound with the A-parameterized budget

        1/(H Vx)  <=  (1/c4) exp[ beta ((1+A^2) kappa t + 1 + d^2/t) ],

    beta playing the role of c5 e^{c6 A}.  The bounded-potential
    specialization c1 e^{-c2 kappa t} V^{-1} e^{-d^2/(c3 t)} is fitted
    alongside and reported in the details.
    """
    H, d, t, Vx, Vy, A, Ap, kap = _as_arrays(samples)
    if np.any(H <= 0):
        return BoundReport(
            inequality="alt_lower", n_samples=len(samples),
            worst_deficit=math.inf, fitted={}, budget_form="",
            verdict=VIOLATED, flags=["NonPositiveKernel"])
    deficits = -np.log(H) - np.log(Vx)
    basis = np.column_stack([np.ones_like(t),
                             (1.0 + A * A) * kap * t + 1.0 + d * d / t])
    names = ("neg_log_c4", "beta")
    slope = _diagonal_guard(samples, deficits)
    verdict, fit, flags = _split_verdict(deficits, basis, names, margin, slope)
    fitted = {"c4": math.exp(-fit.coeffs[0]), "beta": float(fit.coeffs[1])}

    bounded_basis = np.column_stack([np.ones_like(t), kap * t, d * d / t])
    bfit = fit_constants(deficits, bounded_basis,
                         ("neg_log_c1", "c2", "inv_c3"))
    inv_c3 = bfit.coeffs[2]
    bounded = {"c1": math.exp(-bfit.coeffs[0]), "c2": float(bfit.coeffs[1]),
               "c3": (math.inf if inv_c3 <= 0 else float(1.0 / inv_c3))}

    return BoundReport(
        inequality="alt_lower", n_samples=len(samples),
        worst_deficit=float(deficits.max()), fitted=fitted,
        budget_form="c4*exp(-beta*((1+A^2)*kappa*t + 1 + d^2/t))/Vx",
        verdict=verdict, flags=flags,
        details={"trend_slope": slope, "bounded_f": bounded,
                 "max_budget": fit.max_budget})


# ---------------------------------------------------------------------------
# Harnack
# ---------------------------------------------------------------------------

def harnack_check(spec: SpectralData, cylinders: ParabolicCylinders,
                  u0: np.ndarray, time_samples: int = 9,
                  tamper: float = 1.0) -> BoundReport:
    """Evolve nonnegative initial data and compare sup over Q- with inf over
    Q+ against the budget c1 e^{c2 (A'^2+kappa) r^2}.

    A single evolution cannot witness a violation of an existential budget,
    so the verdict is Holds when sup <= inf and HoldsWithFitted otherwise;
    harnack_budget_study aggregates many draws into a real coverage test.
    The details carry the two-point comparison constant of the separate
    two-solution inequality (log ratio against
    (A'^2+kappa+1/R^2+1/s)(t-s) + d^2/(t-s)).
    """
    u0 = np.asarray(u0, dtype=float)
    space = spec.space
    if np.any(u0 < 0) or not np.any(u0 > 0):
        raise ValueError("initial data must be nonnegative and not all zero")
    cyl = cylinders
    dist = space.distances_from(cyl.center)
    in_ball = dist <= cyl.delta * cyl.radius * (1 + 1e-12)
    if not in_ball.any():
        raise DegenerateCylinder("delta-ball contains no grid points")

    lo_m, hi_m = cyl.minus_window()
    lo_p, hi_p = cyl.plus_window()
    if lo_m <= 0:
        raise DegenerateCylinder("Q- starts at or before t = 0")
    t_minus = np.linspace(lo_m, hi_m, time_samples)
    t_plus = np.linspace(lo_p, hi_p, time_samples)

    evolve = {float(t): spectral_mod.semigroup_apply(spec, u0, float(t))
              for t in np.concatenate([t_minus, t_plus])}
    sup_minus = max(evolve[float(t)][in_ball].max() for t in t_minus)
    inf_plus = min(evolve[float(t)][in_ball].min() for t in t_plus)
    if inf_plus <= 0:
        raise ValueError("evolved data lost positivity (disconnected grid?)")

    stats = potential_stats(space, cyl.center, cyl.radius)
    kappa = curvature_profile(space).kappa
    z = (stats.Aprime ** 2 + kappa) * cyl.radius ** 2
    log_ratio = math.log(sup_minus * tamper / inf_plus)

    # two-point comparison on a deterministic sample of space-time pairs
    nodes_in = np.flatnonzero(in_ball)
    pick = nodes_in[:: max(1, len(nodes_in) // 4)][:4]
    two_point = 0.0
    r2 = cyl.radius ** 2
    s1, t1 = float(t_minus[0]), float(t_plus[-1])
    for xi in pick:
        for yi in pick:
            a, b = evolve[s1][xi], evolve[t1][yi]
            if a <= 0 or b <= 0:     # below the spectral round-off floor
                continue
            dxy = space.distance(space.nodes[xi], space.nodes[yi])
            budget = ((stats.Aprime ** 2 + kappa + 1.0 / r2 + 1.0 / s1)
                      * (t1 - s1) + dxy * dxy / (t1 - s1))
            two_point = max(two_point, math.log(a / b) / budget)

    verdict = HOLDS if log_ratio <= HOLDS_TOL else HOLDS_WITH_FITTED
    fitted = {"c1": math.exp(max(log_ratio, 0.0)), "c2": 0.0}
    return BoundReport(
        inequality="harnack", n_samples=1, worst_deficit=log_ratio,
        fitted=fitted, budget_form="c1*exp(c2*(Aprime^2+kappa)*r^2)",
        verdict=verdict,
        details={"sup_minus": float(sup_minus), "inf_plus": float(inf_plus),
                 "budget_z": z, "two_point_c": two_point,
                 "radius": cyl.radius})


def harnack_budget_study(calibration: Sequence[BoundReport],
                         test: Sequence[BoundReport],
                         margin: float = DEFAULT_MARGIN) -> BoundReport:
    """Fit the Harnack budget on calibration draws and demand that every test
    draw is covered within the margin."""
    if not calibration or not test:
        raise EmptySamples("need calibration and test draws")

    def arrays(reports):
        d = np.array([r.worst_deficit for r in reports])
        z = np.array([r.details["budget_z"] for r in reports])
        return d, np.column_stack([np.ones_like(z), z])

    names = ("log_c1", "c2")
    d_cal, b_cal = arrays(calibration)
    d_test, b_test = arrays(test)
    fit = fit_constants(d_cal, b_cal, names)
    budget = fit.budget(b_test)
    covered = d_test <= budget + math.log(margin)
    worst = float((d_test - budget).max())
    verdict = HOLDS_WITH_FITTED if covered.all() else VIOLATED
    if float(np.concatenate([d_cal, d_test]).max()) <= HOLDS_TOL:
        verdict = HOLDS
    return BoundReport(
        inequality="harnack_budget", n_samples=len(calibration) + len(test),
        worst_deficit=worst,
        fitted={"c1": math.exp(fit.coeffs[0]), "c2": float(fit.coeffs[1])},
        budget_form="c1*exp(c2*(Aprime^2+kappa)*r^2)",
        verdict=verdict,
        flags=[] if covered.all() else ["HoldoutEscape"],
        details={"n_test": len(test), "margin": margin,
                 "uncovered": int((~covered).sum())})


# ---------------------------------------------------------------------------
# constant-free integral and volume comparisons
# ---------------------------------------------------------------------------

def ball_nodes(space: WeightedSpace, center: float, radius: float) -> np.ndarray:
    """Node indices within metric distance radius of center."""
    return np.flatnonzero(space.distances_from(center) <= radius * (1 + 1e-12))


def davies_check(spec: SpectralData, b1, b2, t: float,
                 tamper: float = 1.0) -> BoundReport:
    """Davies integral bound (constant-free):

        int_B1 int_B2 H dmu dmu <= sqrt(V1 V2) e^{-lambda_bottom t - d(B1,B2)^2/(4t)}.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    b1 = np.asarray(b1, dtype=int)
    b2 = np.asarray(b2, dtype=int)
    if b1.size == 0 or b2.size == 0:
        raise EmptySamples("empty node set")
    space = spec.space
    mu = space.cell_measure
    ind1 = np.zeros(space.n)
    ind1[b1] = 1.0
    ind2 = np.zeros(space.n)
    ind2[b2] = 1.0
    c1 = spec.eigenvectors.T @ (mu * ind1)
    c2 = spec.eigenvectors.T @ (mu * ind2)
    lhs = float(np.sum(np.exp(-spec.eigenvalues * t) * c1 * c2)) * tamper

    v1 = float(mu[b1].sum())
    v2 = float(mu[b2].sum())
    d12 = min(float(space.distances_from(space.nodes[i])[b2].min()) for i in b1)
    lam = spec.spectrum_bottom
    rhs = math.sqrt(v1 * v2) * math.exp(-lam * t - d12 * d12 / (4.0 * t))

    ok = lhs <= rhs * (1.0 + 1e-10)
    return BoundReport(
        inequality="davies", n_samples=1,
        worst_deficit=math.log(lhs / rhs) if lhs > 0 else -math.inf,
        fitted={}, budget_form="sqrt(V1*V2)*exp(-lambda*t - d^2/(4t))",
        verdict=HOLDS if ok else VIOLATED,
        details={"lhs": lhs, "rhs": rhs, "distance": d12,
                 "lambda_bottom": lam, "t": t})


def _volume_slack(space: WeightedSpace, radius: float) -> float:
    """Relative slack absorbing the O(h^2) wobble of fractional-cell volumes
    in razor-equality cases (flat doubling, flat annuli)."""
    return max(1e-9, 4.0 * (space.spacing / radius) ** 2)


def doubling_check(space: WeightedSpace, x: float, r: float,
                   tamper: float = 1.0) -> BoundReport:
    """Local volume doubling (constant-free):

        V(B(2r)) <= 2^{n+4A} e^{2(n-1+4A) sqrt(kappa) r} V(B(r)),

    with A = sup |f| over B(2r) (the 3-ball convention applied at radius
    2r/3).  Clipped balls are reported and skipped.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    v2 = ball_volume(space, x, 2.0 * r)
    v1 = ball_volume(space, x, r)
    stats = potential_stats(space, x, 2.0 * r / 3.0)
    kappa = curvature_profile(space).kappa
    n = space.dim
    A = stats.A
    budget = 2.0 ** (n + 4.0 * A) * math.exp(
        2.0 * (n - 1.0 + 4.0 * A) * math.sqrt(kappa) * r)
    lhs = v2.value * tamper
    rhs = budget * v1.value
    flags = ["ClippedBall"] if v2.clipped else []
    if v2.clipped:
        verdict = SKIPPED
    else:
        verdict = HOLDS if lhs <= rhs * (1.0 + _volume_slack(space, r)) \
            else VIOLATED
    return BoundReport(
        inequality="doubling", n_samples=1,
        worst_deficit=math.log(lhs / rhs),
        fitted={}, budget_form="2^(n+4A)*exp(2(n-1+4A)sqrt(kappa) r)",
        verdict=verdict, flags=flags,
        details={"V_2r": v2.value, "V_r": v1.value, "A": A,
                 "kappa": kappa, "x": x, "r": r})


def annulus_comparison_check(space: WeightedSpace, x: float,
                             radii: tuple[float, float, float, float],
                             tamper: float = 1.0) -> BoundReport:
    """Relative volume comparison on annuli (constant-free):

        V(B(R1,R2)) / V(B(r1,r2))  <=  model ratio in dimension n+4A,

    the model ratio taken conservatively (upper estimate on the numerator,
    lower on the denominator), A = sup |f| over B(R2).
    """
    r1, r2, R1, R2 = radii
    if not (0 < r1 < r2 and 0 < R1 < R2 and r1 <= R1 and r2 <= R2):
        raise ValueError("radii must satisfy 0<r1<r2, 0<R1<R2, r1<=R1, r2<=R2")
    vr1 = ball_volume(space, x, r1)
    vr2 = ball_volume(space, x, r2)
    vR1 = ball_volume(space, x, R1)
    vR2 = ball_volume(space, x, R2)
    flags = ["ClippedBall"] if vR2.clipped else []
    stats = potential_stats(space, x, R2 / 3.0)
    kappa = curvature_profile(space).kappa
    m = space.dim + 4.0 * stats.A

    num_hi = space_mod.model_volume_bounds(m, kappa, R2)[1] \
        - space_mod.model_volume_bounds(m, kappa, R1)[0]
    den_lo = space_mod.model_volume_bounds(m, kappa, r2)[0] \
        - space_mod.model_volume_bounds(m, kappa, r1)[1]

    lhs_num = vR2.value - vR1.value
    lhs_den = vr2.value - vr1.value
    details = {"A": stats.A, "kappa": kappa, "m": m, "radii": list(radii)}
    if vR2.clipped or den_lo <= 0 or lhs_den <= 0:
        if den_lo <= 0:
            flags.append("InconclusiveModel")
        return BoundReport(
            inequality="annulus_comparison", n_samples=1,
            worst_deficit=math.nan, fitted={},
            budget_form="model annulus ratio, dim n+4A", verdict=SKIPPED,
            flags=flags, details=details)

    lhs = (lhs_num / lhs_den) * tamper
    rhs = num_hi / den_lo
    slack = _volume_slack(space, min(r1, R2 - R1, r2 - r1))
    details.update({"lhs": lhs, "rhs": rhs})
    return BoundReport(
        inequality="annulus_comparison", n_samples=1,
        worst_deficit=math.log(lhs / rhs), fitted={},
        budget_form="model annulus ratio, dim n+4A",
        verdict=HOLDS if lhs <= rhs * (1.0 + slack) else VIOLATED,
        flags=flags, details=details)


def ball_shift_check(space: WeightedSpace, x: float, y: float, r: float,
                     tamper: float = 1.0) -> BoundReport:
    """Ball recentring comparison (constant-free, needs kappa > 0):

        V(B_x(r)) <= e^{(n-1+4A) sqrt(kappa) (d+r)} / r^{n+4A} * V(B_y(r)),

    with A = sup |f| over B_y(3(d+r)).  kappa = 0 gates the check (flag
    KZero, verdict Skipped).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    kappa = curvature_profile(space).kappa
    d = space.distance(x, y)
    if kappa <= 0:
        return BoundReport(
            inequality="ball_shift", n_samples=1, worst_deficit=math.nan,
            fitted={}, budget_form="exp((n-1+4A)sqrt(kappa)(d+r))/r^(n+4A)",
            verdict=SKIPPED, flags=["KZero"], details={"d": d, "r": r})
    vx = ball_volume(space, x, r)
    vy = ball_volume(space, y, r)
    stats = potential_stats(space, y, d + r)   # sup over B_y(3(d+r))
    A = stats.A
    n = space.dim
    factor = math.exp((n - 1.0 + 4.0 * A) * math.sqrt(kappa) * (d + r)) \
        / r ** (n + 4.0 * A)
    lhs = vx.value * tamper
    rhs = factor * vy.value
    flags = []
    if vx.clipped or vy.clipped:
        flags.append("ClippedBall")
        verdict = SKIPPED
    else:
        verdict = HOLDS if lhs <= rhs * (1.0 + _volume_slack(space, r)) \
            else VIOLATED
    return BoundReport(
        inequality="ball_shift", n_samples=1,
        worst_deficit=math.log(lhs / rhs), fitted={},
        budget_form="exp((n-1+4A)sqrt(kappa)(d+r))/r^(n+4A)",
        verdict=verdict, flags=flags,
        details={"A": A, "kappa": kappa, "d": d, "r": r,
                 "Vx": vx.value, "Vy": vy.value})


# ---------------------------------------------------------------------------
# eigenvalue lower bounds
# ---------------------------------------------------------------------------

def eigen_lower_check(spec: SpectralData, diameter: float | None = None,
                      B: float | None = None, kappa: float | None = None,
                      kmax: int | None = None) -> BoundReport:
    """Eigenvalue growth bound.  With kappa = 0 fit the single constant

        C = min_k lambda_k d^2 / (k+1)^{2/n},     1 <= k <= kmax,

    and with kappa > 0 the per-k first crossing of

        lambda_k = (C/d^2) ((k+1) e^{-C sqrt(kappa) d})^{2/(n+4B)},

    B = max f.  The verdict flags spectra whose implied constants decay
    towards zero (shape inconsistent with (k+1)^{2/n} growth).
    """
    space = spec.space
    if space.boundary == space_mod.DIRICHLET:
        raise ValueError("eigenvalue bound applies to compact closed spaces")
    d = space.diameter if diameter is None else float(diameter)
    if B is None:
        B = float(space.potential.max())
    if kappa is None:
        kappa = curvature_profile(space).kappa
    n = space.dim
    if kmax is None:
        kmax = max(1, space.n // 4)
    kmax = min(kmax, space.n - 1)
    lam = spec.eigenvalues
    ks = np.arange(1, kmax + 1)

    if kappa == 0:
        implied = lam[ks] * d * d / (ks + 1.0) ** (2.0 / n)
    else:
        if n + 4.0 * B <= 0:
            return BoundReport(
                inequality="eigen_lower", n_samples=int(kmax),
                worst_deficit=math.nan, fitted={}, budget_form="",
                verdict=SKIPPED, flags=["NonpositiveModelDimension"],
                details={"n4B": n + 4.0 * B})
        expo = 2.0 / (n + 4.0 * B)
        root = math.sqrt(kappa) * d

        def g(C, k):
            return (C / d**2) * ((k + 1.0) * math.exp(-C * root)) ** expo

        implied = np.empty(len(ks))
        c_peak = 1.0 / (root * expo)
        for i, k in enumerate(ks):
            target = lam[k]
            if g(c_peak, k) <= target:
                implied[i] = math.inf
                continue
            lo_c, hi_c = 0.0, c_peak
            for _ in range(200):
                mid = 0.5 * (lo_c + hi_c)
                if g(mid, k) <= target:
                    lo_c = mid
                else:
                    hi_c = mid
            implied[i] = lo_c

    c_fit = float(implied.min())
    # implied constants must not decay with k (the bound asserts one C for
    # all k); compare first against last quartile of the k-range
    q = max(1, len(implied) // 4)
    head = float(np.mean(np.clip(implied[:q], 0, 1e300)))
    tail_mean = float(np.mean(np.clip(implied[-q:], 0, 1e300)))
    decay = tail_mean / head if head > 0 else math.inf
    shape_ok = decay >= 0.1
    verdict = HOLDS_WITH_FITTED if (c_fit > 0 and shape_ok) else VIOLATED
    # the flat-form constant is always reported for refinement comparisons
    c_flat = float((lam[ks] * d * d / (ks + 1.0) ** (2.0 / n)).min())
    return BoundReport(
        inequality="eigen_lower", n_samples=int(kmax),
        worst_deficit=-math.log(c_fit) if c_fit > 0 else math.inf,
        fitted={"C": c_fit, "C_flat_form": c_flat},
        budget_form="lambda_k >= C (k+1)^(2/n) / d^2  (kappa-adjusted)",
        verdict=verdict,
        flags=[] if shape_ok else ["ShapeDecay"],
        details={"diameter": d, "B": B, "kappa": kappa, "kmax": int(kmax),
                 "argmin_k": int(ks[int(np.argmin(implied))]),
                 "quartile_decay": decay})


# ---------------------------------------------------------------------------
# Green's function envelope and parabolicity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailFit:
    """Volume growth V(rho) fitted on the last decade of radii, both as a
    power law a rho^p and as an exponential a e^{b rho}."""

    rho_max: float
    power_p: float
    power_a: float
    power_rms: float
    exp_b: float
    exp_a: float
    exp_rms: float

    @property
    def power_converges(self) -> bool:
        return self.power_p > 2.0

    @property
    def exp_converges(self) -> bool:
        return self.exp_b >= 2.0 / self.rho_max


def _max_unclipped_radius(space: WeightedSpace, center: float) -> float:
    lo, hi = space.extent
    if space.kind == space_mod.CIRCLE:
        return (hi - lo) / 2.0 * (1 - 1e-12)
    if space.kind == space_mod.RADIAL:
        return hi - center
    return min(center - lo, hi - center)


def volume_tail_fit(space: WeightedSpace, center: float,
                    n_points: int = 64) -> TailFit:
    rho_max = _max_unclipped_radius(space, center)
    if rho_max <= 0:
        raise ValueError("center leaves no room for unclipped balls")
    rhos = np.geomspace(rho_max / 10.0, rho_max, n_points)
    vols = np.array([ball_volume(space, center, r).value for r in rhos])
    logv = np.log(vols)

    pw = np.polyfit(np.log(rhos), logv, 1)
    power_rms = float(np.sqrt(np.mean(
        (logv - np.polyval(pw, np.log(rhos))) ** 2)))
    ex = np.polyfit(rhos, logv, 1)
    exp_rms = float(np.sqrt(np.mean((logv - np.polyval(ex, rhos)) ** 2)))
    return TailFit(rho_max=float(rho_max),
                   power_p=float(pw[0]), power_a=float(math.exp(pw[1])),
                   power_rms=power_rms,
                   exp_b=float(ex[0]), exp_a=float(math.exp(ex[1])),
                   exp_rms=exp_rms)


def _tail_converges(fit: TailFit) -> bool:
    """Resolve the two candidate tails; raises InconclusiveTail when they
    disagree with comparable fit quality."""
    if fit.power_converges == fit.exp_converges:
        return fit.power_converges
    if fit.power_rms * 4.0 <= fit.exp_rms:
        return fit.power_converges
    if fit.exp_rms * 4.0 <= fit.power_rms:
        return fit.exp_converges
    raise InconclusiveTail(
        f"power tail (p={fit.power_p:.3g}, rms={fit.power_rms:.2g}) and "
        f"exponential tail (b={fit.exp_b:.3g}, rms={fit.exp_rms:.2g}) disagree")


def _tail_integral(fit: TailFit) -> float:
    """int_{rho_max^2}^inf dt / V(sqrt t) under the winning tail model."""
    if not _tail_converges(fit):
        return math.inf
    use_power = fit.power_converges and (
        not fit.exp_converges or fit.power_rms <= fit.exp_rms)
    if use_power:
        return (2.0 / fit.power_a) * fit.rho_max ** (2.0 - fit.power_p) \
            / (fit.power_p - 2.0)
    b, a, R = fit.exp_b, fit.exp_a, fit.rho_max
    return (2.0 / a) * math.exp(-b * R) * (R / b + 1.0 / b ** 2)


def volume_envelope_integral(space: WeightedSpace, center: float,
                             r: float, tail: TailFit | None = None,
                             n_grid: int = 2048) -> float:
    """int_{r^2}^inf V(B_center(sqrt t))^{-1} dt, computed as 2 s / V(s) on
    the resolved radii plus the fitted analytic tail beyond them."""
    if tail is None:
        tail = volume_tail_fit(space, center)
    rho_max = tail.rho_max
    if r >= rho_max:
        raise ValueError("r must resolve inside the unclipped radius range")
    s = np.linspace(r, rho_max, n_grid)
    v = np.array([ball_volume(space, center, si).value for si in s])
    core = float(np.trapezoid(2.0 * s / v, s))
    return core + _tail_integral(tail)


def green_envelope_check(spec: SpectralData, probes: Sequence[float],
                         center: float, spread_tol: float = 2.0,
                         tamper: float = 1.0,
                         doubled_spec: SpectralData | None = None) -> BoundReport:
    """Green's function against the volume envelope:

        c1 int_{r^2}^inf V^{-1}(B(sqrt t)) dt <= G <= c2 (same integral).

    Needs a Dirichlet-truncated spectrum (G finite).  Reports the median
    ratio G / integral over the probes and its spread; a spread beyond
    ``spread_tol`` means no constant pair works (shape failure).  When the
    envelope integral diverges the minimal Green's function cannot exist
    either; if ``doubled_spec`` (the same space with doubled extent) is
    supplied, consistency is verified by requiring the truncated G to keep
    growing instead of stabilizing.
    """
    space = spec.space
    if spec.conserving:
        raise ValueError("green_envelope_check needs a Dirichlet truncation")
    if len(probes) == 0:
        raise EmptySamples("no probe points")
    tail = volume_tail_fit(space, center)
    try:
        converges = _tail_converges(tail)
    except InconclusiveTail:
        return BoundReport(
            inequality="green_envelope", n_samples=len(probes),
            worst_deficit=math.nan, fitted={}, budget_form="",
            verdict=SKIPPED, flags=["InconclusiveTail"], details={})

    if not converges:
        flags = ["DivergentGreen"]
        details: dict = {}
        verdict = HOLDS
        if doubled_spec is not None:
            g1 = [spectral_mod.green_function(spec, x, center) for x in probes]
            g2 = [spectral_mod.green_function(doubled_spec, x, center)
                  for x in probes]
            growth = min(b / a for a, b in zip(g1, g2))
            details["truncation_growth"] = growth
            if growth < 1.2:
                verdict = VIOLATED
                flags.append("GreenStabilized")
        return BoundReport(
            inequality="green_envelope", n_samples=len(probes),
            worst_deficit=math.nan, fitted={},
            budget_form="c*int V^-1(B(sqrt t)) dt",
            verdict=verdict, flags=flags, details=details)

    ratios, rs = [], []
    for x in probes:
        g = spectral_mod.green_function(spec, x, center) * tamper
        r = space.distance(x, center)
        env = volume_envelope_integral(space, center, r, tail)
        ratios.append(g / env)
        rs.append(r)
    ratios = np.asarray(ratios)
    spread = float(ratios.max() / ratios.min()) if ratios.min() > 0 else math.inf
    verdict = HOLDS_WITH_FITTED if spread <= spread_tol else VIOLATED
    return BoundReport(
        inequality="green_envelope", n_samples=len(probes),
        worst_deficit=math.log(spread),
        fitted={"ratio": float(np.median(ratios)),
                "c1": float(ratios.min()), "c2": float(ratios.max())},
        budget_form="c*int V^-1(B(sqrt t)) dt", verdict=verdict,
        flags=[] if verdict != VIOLATED else ["RatioSpread"],
        details={"ratios": [float(v) for v in ratios],
                 "r": [float(v) for v in rs], "spread": spread})


@dataclass(frozen=True)
class ParabolicityResult:
    verdict: str
    tail: TailFit
    flags: tuple[str, ...] = ()


def parabolicity_probe(space: WeightedSpace, center: float,
                       green_bracket: tuple[float, float] | None = None,
                       ) -> ParabolicityResult:
    """Convergence test for int_1^inf V^{-1}(B(sqrt t)) dt via the fitted
    volume tail: convergent -> Nonparabolic, divergent -> Parabolic.

    ``green_bracket`` optionally supplies Dirichlet Green values at a
    truncation and at a doubled truncation; a verdict inconsistent with
    their behaviour is flagged (BracketMismatch), not overridden.
    """
    tail = volume_tail_fit(space, center)
    converges = _tail_converges(tail)  # may raise InconclusiveTail
    verdict = NONPARABOLIC if converges else PARABOLIC
    flags: tuple[str, ...] = ()
    if green_bracket is not None:
        g1, g2 = green_bracket
        stabilized = abs(g2 - g1) <= 0.25 * max(abs(g1), abs(g2))
        if (verdict == NONPARABOLIC) != stabilized:
            flags = ("BracketMismatch",)
    return ParabolicityResult(verdict=verdict, tail=tail, flags=flags)


# ---------------------------------------------------------------------------
# refinement stability
# ---------------------------------------------------------------------------

#: constants smaller than this are compared on an absolute scale when
#: computing refinement stability
STABILITY_FLOOR = 0.05


def refinement_stability(coarse: BoundReport, fine: BoundReport) -> BoundReport:
    """Attach the relative change of fitted constants under h -> h/2 to the
    coarse report (in percent, worst constant)."""
    worst = 0.0
    for key, a in coarse.fitted.items():
        b = fine.fitted.get(key)
        if b is None:
            continue
        if math.isinf(a) or math.isinf(b):
            change = 0.0 if a == b else 100.0
        else:
            change = 100.0 * abs(a - b) / max(abs(a), abs(b), STABILITY_FLOOR)
        worst = max(worst, change)
    coarse.stability_pct = worst
    return coarse
