"""Threshold bounds, peak-prevalence formulas, NIMFA and finite-N threshold estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse.linalg import expm_multiply

from . import exact
from .exact import SIR, SIS, EpidemicParams, MomentSeries
from .graph import ConvergenceError, Graph, spectral_radius
from .montecarlo import qs_simulate


def threshold_lower_bound(g: Graph) -> float:
    """``1 / lambda1``; infinite for an edgeless graph."""
    lam = spectral_radius(g).lambda1
    return math.inf if lam <= 0 else 1.0 / lam


@dataclass(frozen=True)
class UpperBound:
    bound: float  # 1 / (d_min (1 - eps))
    asymptotic: float  # 1 / d_min, the leading term for large N
    eps: float


def threshold_upper_bound(g: Graph, eps: float) -> UpperBound:
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    if g.d_min == 0:
        return UpperBound(math.inf, math.inf, eps)
    return UpperBound(1.0 / (g.d_min * (1.0 - eps)), 1.0 / g.d_min, eps)


def yimax_regular(g: Graph, p: EpidemicParams, e_term: float) -> float:
    """Peak prevalence of a regular graph from ``E[w_I^T A (w_I + w_R)]`` at the peak."""
    if not g.is_regular:
        raise ValueError("graph is not regular")
    denom = g.r * p.tau - 1.0
    if denom == 0.0:
        raise ZeroDivisionError("r * tau == 1: peak formula is singular")
    return p.tau / g.n * e_term / denom


@dataclass(frozen=True)
class Envelope:
    lower: float
    upper: float
    void: bool  # tau * d_max <= 1: no positive peak


def yimax_envelope(g: Graph, p: EpidemicParams, e_term: float) -> Envelope:
    """Bracket on the peak prevalence from ``d_min u <= D <= d_max u``.

    The upper side is ``inf`` when ``tau * d_min <= 1`` (one-sided bracket).
    """
    tau = p.tau
    if tau * g.d_max <= 1.0:
        return Envelope(0.0, 0.0, True)
    lo = tau / g.n * e_term / (tau * g.d_max - 1.0)
    hi = tau / g.n * e_term / (tau * g.d_min - 1.0) if tau * g.d_min > 1.0 else math.inf
    return Envelope(lo, hi, False)


def peak_e_term(m: MomentSeries) -> np.ndarray:
    """``E[w_I^T A (w_I + w_R)]`` along a moment series."""
    return m.e_inner + m.e_mixed


@dataclass(frozen=True)
class ExactPeak:
    t_peak: float
    y_max: float
    e_term: float
    e_cut: float
    e_mixed: float
    boundary: bool


def exact_peak(
    model, g: Graph, p: EpidemicParams, init, t_max: float = 10.0, points: int = 2001, tol: float = 1e-10, max_nodes=None
) -> ExactPeak:
    """Locate the prevalence peak of an exact solve to root precision.

    A grid argmax brackets the peak; ``dy_I/dt* = (p G / delta) . z`` is then
    evaluated through ``expm_multiply`` and its root found with Brent's method.
    """
    gen = exact.build_generator(model, g, p, max_nodes)
    grid = np.linspace(0.0, t_max, points)
    p0 = gen.space.point_mass(infected=list(init))
    traj = exact.integrate_master(gen, p0, grid, tol=tol, atol=1e-14)
    obs = exact.state_observables(gen.space, g)
    y = traj.dists @ obs.z_i
    k = int(np.argmax(y))
    op = gen.forward

    def dist_at(t):
        j = min(max(k, 1), len(grid) - 1) - 1
        return expm_multiply(op * (t - grid[j]), traj.dists[j])

    def slope(t):
        return float((op @ dist_at(t)) @ obs.z_i)

    if k == 0 or k == len(grid) - 1:
        d = traj.dists[k]
        t_peak, boundary = grid[k], True
    else:
        lo, hi = grid[k - 1], grid[k + 1]
        t_peak = brentq(slope, lo, hi, xtol=1e-14) if slope(lo) > 0 > slope(hi) else grid[k]
        d = dist_at(t_peak)
        boundary = False
    m = exact.moments_from_dists(d, obs, [t_peak], g.n)
    return ExactPeak(
        t_peak=float(t_peak),
        y_max=float(m.y_I[0]),
        e_term=float(peak_e_term(m)[0]),
        e_cut=float(m.e_cut[0]),
        e_mixed=float(m.e_mixed[0]),
        boundary=boundary,
    )


@dataclass(frozen=True)
class ExtremumCheck:
    times: tuple[float, ...]
    residuals: tuple[float, ...]
    found: bool

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else math.nan


def variance_extremal_formula(m: MomentSeries, tau: float) -> np.ndarray:
    n = m.n
    return tau / n * (m.e_z_cut - m.y_I * m.e_cut) + (m.y_I + tau / n * m.e_cut) / (2.0 * n)


def variance_extremal_check(m: MomentSeries, p: EpidemicParams) -> ExtremumCheck:
    """Compare ``Var[Z_I]`` with the extremal formula where ``dVar/dt*`` changes sign.

    The sign change is found on central differences of ``Var[Z_I]`` (no use of
    the variance equation) and both sides are linearly interpolated to the
    crossing.
    """
    idx, dv = exact.central_difference(m.var_z, m.t_star)
    gap = m.var_z - variance_extremal_formula(m, p.tau)
    times, res = [], []
    for a in range(len(idx) - 1):
        i, j = idx[a], idx[a + 1]
        if j != i + 1 or dv[a] == 0.0 or np.sign(dv[a]) == np.sign(dv[a + 1]):
            continue
        if max(abs(dv[a]), abs(dv[a + 1])) < 1e-9:
            continue  # flat numerical noise, not an extremum
        w = dv[a] / (dv[a] - dv[a + 1])
        times.append(float(m.t_star[i] + w * (m.t_star[j] - m.t_star[i])))
        res.append(float(abs(gap[i] + w * (gap[j] - gap[i]))))
    return ExtremumCheck(tuple(times), tuple(res), bool(times))


@dataclass(frozen=True)
class NimfaState:
    v: np.ndarray
    tau: float
    residual: float
    iterations: int


def nimfa_solve(g: Graph, tau: float, tol: float = 1e-12, damping: float = 0.5, max_iter: int = 100_000) -> NimfaState:
    """Steady state of the mean-field equations ``v_i = tau (1 - v_i) sum_j a_ij v_j``.

    Damped fixed-point iteration from ``0.9 u``; returns ``v = 0`` at or below
    ``tau = 1 / lambda1`` (compared with a relative slack of 1e-9 so that the
    critical point itself, where the iteration stalls, counts as subcritical).
    """
    if tau <= 0 or tol <= 0:
        raise ValueError("tau and tol must be positive")
    a = g.adjacency.astype(float)
    if tau * spectral_radius(g).lambda1 <= 1.0 + 1e-9:
        return NimfaState(np.zeros(g.n), tau, 0.0, 0)
    v = np.full(g.n, 0.9)
    for it in range(1, max_iter + 1):
        s = tau * (a @ v)
        f = s / (1.0 + s)
        res = float(np.abs(f - v).max())
        if res < tol:
            return NimfaState(f, tau, res, it)
        v = (1.0 - damping) * v + damping * f
    raise ConvergenceError(f"NIMFA iteration did not converge in {max_iter} steps", last=v, iterations=max_iter)


def nimfa_trajectory(g: Graph, tau: float, v0, grid, tol: float = 1e-11) -> np.ndarray:
    """Integrate ``dv_i/dt* = -v_i + tau (1 - v_i) (A v)_i``; shape ``(len(grid), N)``."""
    a = g.adjacency.astype(float)
    sol = solve_ivp(
        lambda _t, v: -v + tau * (1.0 - v) * (a @ v),
        (0.0, float(grid[-1])),
        np.asarray(v0, dtype=float),
        method="DOP853",
        t_eval=grid,
        rtol=tol,
        atol=1e-14,
    )
    if sol.status != 0:
        raise RuntimeError(sol.message)
    return sol.y.T


@dataclass(frozen=True)
class Dominance:
    nimfa_over_sis: float  # max(Pr[X_i=I] - v_i), should be <= 0
    sis_over_sir: float  # max(Pr[Y_i=I] - Pr[X_i=I]), should be <= 0

    @property
    def max_violation(self) -> float:
        return max(self.nimfa_over_sis, self.sis_over_sir, 0.0)


def nimfa_dominance_check(g: Graph, p: EpidemicParams, init, horizon: float = 10.0, points: int = 201, tol: float = 1e-11) -> Dominance:
    """Check ``v_i >= Pr[X_i=I] >= Pr[Y_i=I]`` on a grid from the same initial infected set."""
    grid = np.linspace(0.0, horizon, points)
    init = [int(j) for j in init]
    sis = exact.marginals(exact.solve(SIS, g, p, init, grid, tol=tol), "I")
    sir = exact.marginals(exact.solve(SIR, g, p, init, grid, tol=tol), "I")
    v0 = np.zeros(g.n)
    v0[init] = 1.0
    v = nimfa_trajectory(g, p.tau, v0, grid, tol=tol)
    return Dominance(float((sis - v).max()), float((sir - sis).max()))


@dataclass(frozen=True)
class ThresholdCurve:
    taus: np.ndarray
    y_qs: np.ndarray
    h_tau: np.ndarray  # N y / E[w^T Q w]
    chi: np.ndarray  # N Var[Z_I] / y
    eps_link_max: np.ndarray

    CSV_FIELDS = ("tau", "y_qs", "h_tau", "chi", "eps_link_max")

    def rows(self):
        return zip(self.taus, self.y_qs, self.h_tau, self.chi, self.eps_link_max)


@dataclass(frozen=True)
class ThresholdEstimate:
    method: str
    backend: str
    tau_hat: float
    resolved: bool
    tau_at: float  # tau where the estimate was read off
    boundary: bool  # read at the grid edge (band already reached / peak at edge)
    curve: ThresholdCurve = field(repr=False)


METHODS = ("eq12_ratio", "susceptibility_peak")
BACKENDS = ("exact_qs", "qs_simulate")


def default_tau_grid(g: Graph, points: int = 45) -> np.ndarray:
    lam = spectral_radius(g).lambda1
    return np.linspace(0.8 / lam, 3.0 / lam, points)


class _ExactQS:
    """QS moments of one graph across tau values, warm-starting the power iteration."""

    def __init__(self, g: Graph, tol: float):
        self.g = g
        self.tol = tol
        self.space = exact.StateSpace(SIS, g.n)
        self.obs = exact.state_observables(self.space, g)
        self.start = None

    def __call__(self, tau: float):
        gen = exact.build_sis_generator(self.g, EpidemicParams.from_tau(tau), max_nodes=exact.SIS_HARD_CAP)
        qs = exact.quasi_stationary(gen, tol=self.tol, start=self.start)
        self.start = qs.probs
        m = exact.moments_from_dists(qs.probs, self.obs, [0.0], self.g.n)
        y, cut, var = float(m.y_I[0]), float(m.e_cut[0]), float(m.var_z[0])
        eps = float(exact.link_conditionals(self.g, self.space, qs.probs).max()) if self.g.m else 0.0
        return y, cut, var, eps


def threshold_curve(g: Graph, taus, backend: str = "exact_qs", tol: float = 1e-13, qs_kwargs=None) -> ThresholdCurve:
    taus = np.asarray(taus, dtype=float)
    if (np.diff(taus) <= 0).any():
        raise ValueError("tau grid must be strictly increasing")
    rows = []
    if backend == "exact_qs":
        f = _ExactQS(g, tol)
        rows = [f(t) for t in taus]
    elif backend == "qs_simulate":
        kw = dict(qs_kwargs or {})
        seed = kw.pop("seed", 0)
        for k, t in enumerate(taus):
            est = qs_simulate(g, EpidemicParams.from_tau(t), seed=(seed, k), **kw)
            rows.append((est.y_qs, est.e_cut, est.var_z, est.eps_link_max))
    else:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    y, cut, var, eps = (np.array(c) for c in zip(*rows))
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(cut > 0, g.n * y / cut, np.nan)
        chi = np.where(y > 0, g.n * var / y, 0.0)
    return ThresholdCurve(taus, y, h, chi, eps)


def estimate_threshold(
    g: Graph,
    tau_grid=None,
    method: str = "eq12_ratio",
    backend: str = "exact_qs",
    band: float | None = None,
    refine: bool = True,
    tol: float = 1e-13,
    qs_kwargs=None,
    curve: ThresholdCurve | None = None,
) -> ThresholdEstimate:
    """Finite-N threshold estimate from quasi-stationary statistics.

    ``eq12_ratio`` reads ``h(tau) = N y / E[w^T Q w]`` at the smallest tau
    whose QS prevalence reaches ``band`` (default ``2 / N``). With the exact
    backend and ``refine``, the crossing between the bracketing grid points is
    located by Brent's method. ``susceptibility_peak`` takes the argmax of
    ``chi = N Var[Z_I] / y`` with parabolic refinement (exact backend only).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    taus = default_tau_grid(g) if tau_grid is None else np.asarray(tau_grid, dtype=float)
    if curve is None:
        curve = threshold_curve(g, taus, backend, tol, qs_kwargs)
    taus = curve.taus
    exact_backend = backend == "exact_qs"
    if method == "eq12_ratio":
        band = 2.0 / g.n if band is None else band
        hit = np.flatnonzero(curve.y_qs >= band)
        if hit.size == 0:
            return ThresholdEstimate(method, backend, math.nan, False, math.nan, False, curve)
        k = int(hit[0])
        if not (refine and exact_backend):
            return ThresholdEstimate(method, backend, float(curve.h_tau[k]), True, float(taus[k]), k == 0, curve)
        f = _ExactQS(g, tol)
        lo, hi = (taus[k - 1], taus[k]) if k > 0 else (taus[0], taus[0])
        for _ in range(60):
            # band already reached at the grid start: walk the bracket down
            if lo < hi:
                break
            lo = lo * 0.8
            if f(lo)[0] < band:
                break
            hi = lo
        else:
            return ThresholdEstimate(method, backend, float(curve.h_tau[0]), True, float(taus[0]), True, curve)
        t_star = brentq(lambda t: f(t)[0] - band, lo, hi, xtol=1e-12)
        y, cut, _, _ = f(t_star)
        return ThresholdEstimate(method, backend, float(g.n * y / cut), True, float(t_star), False, curve)
    k = int(np.argmax(curve.chi))
    if k == 0 or k == len(taus) - 1:
        return ThresholdEstimate(method, backend, float(taus[k]), True, float(taus[k]), True, curve)
    t_hat = float(taus[k])
    if refine and exact_backend:
        a, b, _ = np.polyfit(taus[k - 1 : k + 2] - taus[k], curve.chi[k - 1 : k + 2], 2)
        if a < 0:
            t_hat = float(taus[k] - b / (2 * a))
    return ThresholdEstimate(method, backend, t_hat, True, t_hat, False, curve)


@dataclass(frozen=True)
class ThresholdReport:
    lambda1: float
    lower_bound: float
    epsilon_g: exact.EpsilonEstimate
    upper_bound: float
    upper_bound_asymptotic: float
    tau_hat: float
    tau_hat_method: str
    consistency: bool


def threshold_report(g: Graph, method: str = "eq12_ratio", backend: str = "exact_qs", tau_grid=None, eps=None, estimate=None) -> ThresholdReport:
    """Lower bound, epsilon_G, upper bound and a finite-N threshold estimate for one graph."""
    lam = spectral_radius(g).lambda1
    lower = math.inf if lam <= 0 else 1.0 / lam
    eps = exact.epsilon_g(g) if eps is None else eps
    ub = threshold_upper_bound(g, eps.estimate)
    est = estimate_threshold(g, tau_grid, method, backend) if estimate is None else estimate
    ok = bool(est.resolved and lower <= est.tau_hat <= ub.bound)
    return ThresholdReport(
        lambda1=lam,
        lower_bound=lower,
        epsilon_g=eps,
        upper_bound=ub.bound,
        upper_bound_asymptotic=ub.asymptotic,
        tau_hat=est.tau_hat,
        tau_hat_method=f"{est.method}/{est.backend}",
        consistency=ok,
    )


@dataclass(frozen=True)
class VariancePeak:
    taus: np.ndarray
    max_var: np.ndarray
    tau_grid_argmax: float
    tau_refined: float
    boundary: bool


def variance_peak_sweep(g: Graph, taus, t_max: float = 40.0, points: int = 2001, conditional: bool = True, init=None) -> VariancePeak:
    """Time-maximum of ``Var[Z_I]`` across a tau sweep of exact SIS solves.

    Defaults start every solve from the all-infected state and condition on
    survival (mass of the absorbing state removed before taking moments), which
    isolates the metastable fluctuations from the extinction mode. The
    refined location is a parabola through the grid maximum and its
    neighbours.
    """
    taus = np.asarray(taus, dtype=float)
    grid = np.linspace(0.0, t_max, points)
    init = list(range(g.n)) if init is None else list(init)
    space = exact.StateSpace(SIS, g.n)
    z = space.infected.sum(axis=1) / g.n
    out = []
    for tau in taus:
        d = exact.solve(SIS, g, EpidemicParams.from_tau(tau), init, grid).dists
        if conditional:
            d = d.copy()
            d[:, 0] = 0.0
            mass = d.sum(axis=1)
            d = d[mass > 1e-12] / mass[mass > 1e-12, None]
        y = d @ z
        out.append(float((d @ (z * z) - y * y).max()))
    mv = np.array(out)
    k = int(np.argmax(mv))
    refined = float(taus[k])
    boundary = k == 0 or k == len(taus) - 1
    if not boundary:
        a, b, _ = np.polyfit(taus[k - 1 : k + 2] - taus[k], mv[k - 1 : k + 2], 2)
        if a < 0:
            refined = float(taus[k] - b / (2 * a))
    return VariancePeak(taus, mv, float(taus[k]), refined, boundary)
