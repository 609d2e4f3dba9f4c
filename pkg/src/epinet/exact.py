"""Exact SIS (2^N) and SIR (3^N) Markov chains on a graph.

States are integers. SIS: bit ``j`` set means node ``j`` is infected. SIR:
base-3 little-endian digits, digit ``j`` in ``{0: S, 1: I, 2: R}``. Time on
every trajectory grid is scaled time ``t* = delta * t``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .graph import ConvergenceError, Graph, spectral_radius

SIS = "SIS"
SIR = "SIR"
S, I, R = 0, 1, 2
COMPARTMENTS = {"S": S, "I": I, "R": R}

# Hard representability limits and default practical caps.
SIS_HARD_CAP = 25
SIR_HARD_CAP = 16
SIS_CAP = 14
SIR_CAP = 9


class SizeCapError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


def _model(model: str) -> str:
    m = str(model).upper()
    if m not in (SIS, SIR):
        raise ValueError(f"model must be SIS or SIR, got {model!r}")
    return m


def _compartment(c) -> int:
    if isinstance(c, str):
        try:
            return COMPARTMENTS[c.upper()]
        except KeyError:
            raise ValueError(f"unknown compartment {c!r}") from None
    c = int(c)
    if c not in (S, I, R):
        raise ValueError(f"unknown compartment {c!r}")
    return c


@dataclass(frozen=True)
class EpidemicParams:
    """Infection rate ``beta`` per link, curing rate ``delta`` per node."""

    beta: float
    delta: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and self.delta > 0):
            raise ValueError(f"rates must be positive, got beta={self.beta}, delta={self.delta}")

    @property
    def tau(self) -> float:
        return self.beta / self.delta

    @classmethod
    def from_tau(cls, tau: float, delta: float = 1.0) -> "EpidemicParams":
        return cls(beta=tau * delta, delta=delta)


@dataclass(frozen=True)
class StateSpace:
    model: str
    n: int

    @property
    def base(self) -> int:
        return 2 if self.model == SIS else 3

    @property
    def size(self) -> int:
        return self.base**self.n

    @cached_property
    def _powers(self) -> np.ndarray:
        return self.base ** np.arange(self.n, dtype=np.int64)

    @cached_property
    def table(self) -> np.ndarray:
        """``(size, n)`` array of compartment codes for every state."""
        idx = np.arange(self.size, dtype=np.int64)
        t = (idx[:, None] // self._powers[None, :]) % self.base
        t = t.astype(np.int8)
        t.flags.writeable = False
        return t

    @cached_property
    def infected(self) -> np.ndarray:
        w = (self.table == I).astype(np.int64)
        w.flags.writeable = False
        return w

    @cached_property
    def removed(self) -> np.ndarray:
        w = (self.table == R).astype(np.int64)
        w.flags.writeable = False
        return w

    def encode(self, compartments: Sequence) -> int:
        codes = np.array([_compartment(c) for c in compartments], dtype=np.int64)
        if codes.size != self.n:
            raise ValueError(f"need {self.n} compartments, got {codes.size}")
        if self.model == SIS and (codes == R).any():
            raise ValueError("SIS has no removed compartment")
        return int(codes @ self._powers)

    def decode(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise ValueError(f"state {index} out of range")
        return np.array([(index // int(p)) % self.base for p in self._powers], dtype=np.int8)

    def point_mass(self, infected=(), removed=()) -> np.ndarray:
        codes = [S] * self.n
        for j in infected:
            codes[j] = I
        for j in removed:
            codes[j] = R
        p = np.zeros(self.size)
        p[self.encode(codes)] = 1.0
        return p

    @cached_property
    def absorbing(self) -> np.ndarray:
        """Boolean mask of states with no infected node."""
        return self.infected.sum(axis=1) == 0


@dataclass(frozen=True, eq=False)
class Generator:
    """Sparse CTMC generator in raw time units; row ``s`` holds the exit rates of ``s``."""

    space: StateSpace
    rates: sp.csr_matrix
    graph: Graph
    params: EpidemicParams

    @cached_property
    def forward(self) -> sp.csr_matrix:
        """``G^T / delta``: right-hand side operator of ``dp/dt* = p G / delta``."""
        return (self.rates.T / self.params.delta).tocsr()

    @property
    def diagonal(self) -> np.ndarray:
        return self.rates.diagonal()

    def outgoing(self, state: int) -> dict[int, float]:
        row = self.rates.getrow(state)
        return {int(j): float(v) for j, v in zip(row.indices, row.data) if j != state and v != 0}


def _check_cap(model, n, cap, hard):
    if n > hard:
        raise SizeCapError(f"{model} state space for N={n} exceeds the hard limit N<={hard}")
    if n > cap:
        raise SizeCapError(
            f"{model} exact solve capped at N<={cap} (got N={n}); raise the cap explicitly "
            "or use epinet.montecarlo for larger graphs"
        )


def _assemble(space: StateSpace, rows, cols, vals) -> sp.csr_matrix:
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    off = sp.csr_matrix((vals, (rows, cols)), shape=(space.size, space.size))
    out = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(out)).tocsr()


def build_sis_generator(g: Graph, p: EpidemicParams, max_nodes: int = SIS_CAP) -> Generator:
    _check_cap(SIS, g.n, max_nodes, SIS_HARD_CAP)
    space = StateSpace(SIS, g.n)
    w = space.infected
    pressure = w @ g.adjacency  # infected neighbours of each node, per state
    states = np.arange(space.size, dtype=np.int64)
    rows, cols, vals = [], [], []
    for j in range(g.n):
        bit = np.int64(1) << j
        inf = w[:, j] == 1
        src = states[inf]
        rows.append(src)
        cols.append(src ^ bit)
        vals.append(np.full(src.size, p.delta))
        sus = ~inf & (pressure[:, j] > 0)
        src = states[sus]
        rows.append(src)
        cols.append(src | bit)
        vals.append(p.beta * pressure[sus, j])
    return Generator(space, _assemble(space, rows, cols, vals), g, p)


def build_sir_generator(g: Graph, p: EpidemicParams, max_nodes: int = SIR_CAP) -> Generator:
    _check_cap(SIR, g.n, max_nodes, SIR_HARD_CAP)
    space = StateSpace(SIR, g.n)
    table = space.table
    pressure = space.infected @ g.adjacency
    states = np.arange(space.size, dtype=np.int64)
    rows, cols, vals = [], [], []
    for j in range(g.n):
        step = np.int64(3**j)  # S->I and I->R both add one to digit j
        src = states[table[:, j] == I]
        rows.append(src)
        cols.append(src + step)
        vals.append(np.full(src.size, p.delta))
        sus = (table[:, j] == S) & (pressure[:, j] > 0)
        src = states[sus]
        rows.append(src)
        cols.append(src + step)
        vals.append(p.beta * pressure[sus, j])
    return Generator(space, _assemble(space, rows, cols, vals), g, p)


def build_generator(model: str, g: Graph, p: EpidemicParams, max_nodes: int | None = None) -> Generator:
    model = _model(model)
    if model == SIS:
        return build_sis_generator(g, p, SIS_CAP if max_nodes is None else max_nodes)
    return build_sir_generator(g, p, SIR_CAP if max_nodes is None else max_nodes)


@dataclass(frozen=True, eq=False)
class DistributionTrajectory:
    space: StateSpace
    grid: np.ndarray
    dists: np.ndarray  # (len(grid), space.size)
    tol: float

    def clipped(self) -> np.ndarray:
        """Probabilities clipped to ``[0, 1]``, for reporting only."""
        return np.clip(self.dists, 0.0, 1.0)


def integrate_master(
    gen: Generator,
    init: np.ndarray,
    grid: Sequence[float],
    tol: float = 1e-8,
    atol: float = 1e-12,
) -> DistributionTrajectory:
    """Integrate the forward equation ``dp/dt* = p G / delta`` on ``grid``.

    Uses the adaptive Dormand-Prince 8(5,3) pair with dense output; ``tol`` is
    the relative tolerance and ``atol`` the absolute one.
    """
    if tol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    init = np.asarray(init, dtype=float)
    if init.shape != (gen.space.size,):
        raise ValueError(f"init must have length {gen.space.size}")
    if (init < 0).any() or abs(init.sum() - 1.0) > 1e-9:
        raise ValueError("init must be a probability vector")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0 or (np.diff(grid) <= 0).any():
        raise ValueError("grid must be strictly increasing and start at 0")
    if grid.size == 1:
        return DistributionTrajectory(gen.space, grid, init[None, :].copy(), tol)
    op = gen.forward
    sol = solve_ivp(
        lambda _t, y: op @ y,
        (0.0, float(grid[-1])),
        init,
        method="DOP853",
        t_eval=grid,
        rtol=tol,
        atol=atol,
    )
    if sol.status != 0:
        raise IntegrationError(
            f"integration failed ({sol.message}); the system may be stiff: reduce the tau range "
            "or use uniformization (scipy.sparse.linalg.expm_multiply)"
        )
    return DistributionTrajectory(gen.space, grid, np.ascontiguousarray(sol.y.T), tol)


def solve(model, g: Graph, p: EpidemicParams, init, grid, tol: float = 1e-8, max_nodes=None):
    """Build the generator and integrate from ``init``.

    ``init`` is a probability vector or an iterable of initially infected nodes.
    """
    gen = build_generator(model, g, p, max_nodes)
    init = np.asarray(init)
    if init.ndim == 1 and init.size == gen.space.size and init.dtype.kind == "f":
        p0 = init
    else:
        p0 = gen.space.point_mass(infected=[int(j) for j in np.atleast_1d(init)])
    return integrate_master(gen, p0, grid, tol)


def marginal(traj: DistributionTrajectory, node: int, compartment="I") -> np.ndarray:
    c = _compartment(compartment)
    if traj.space.model == SIS and c == R:
        raise ValueError("SIS has no removed compartment")
    if not 0 <= node < traj.space.n:
        raise ValueError(f"node {node} out of range")
    return traj.dists @ (traj.space.table[:, node] == c).astype(float)


def marginals(traj: DistributionTrajectory, compartment="I") -> np.ndarray:
    """All nodal marginals at once, shape ``(len(grid), N)``."""
    c = _compartment(compartment)
    if traj.space.model == SIS and c == R:
        raise ValueError("SIS has no removed compartment")
    return traj.dists @ (traj.space.table == c).astype(float)


def _joint_mask(space: StateSpace, assignment: Mapping) -> np.ndarray:
    mask = np.ones(space.size, dtype=bool)
    for node, c in assignment.items():
        c = _compartment(c)
        if space.model == SIS and c == R:
            raise ValueError("SIS has no removed compartment")
        if not 0 <= int(node) < space.n:
            raise ValueError(f"node {node} out of range")
        mask &= space.table[:, int(node)] == c
    return mask


def joint(traj: DistributionTrajectory, assignment: Mapping) -> np.ndarray:
    """``Pr[node_1 = c_1, ..., node_k = c_k]`` along the grid."""
    return traj.dists @ _joint_mask(traj.space, assignment).astype(float)


def pair_matrix(traj: DistributionTrajectory, a="I", b="I") -> np.ndarray:
    """``P[t, j, k] = Pr[node j in a, node k in b]`` for every pair, shape ``(T, N, N)``."""
    ta = (traj.space.table == _compartment(a)).astype(float)
    tb = (traj.space.table == _compartment(b)).astype(float)
    return np.einsum("ts,sj,sk->tjk", traj.dists, ta, tb, optimize=True)


@dataclass(frozen=True)
class StateObservables:
    """Per-state values of the prevalence observables."""

    z_i: np.ndarray
    z_r: np.ndarray
    cut: np.ndarray
    mixed: np.ndarray
    deg: np.ndarray  # D^T w_I
    inner: np.ndarray  # w_I^T A w_I
    pairs: np.ndarray  # sum_{i != j} 1{X_i=I} 1{X_j=I}


def state_observables(space: StateSpace, g: Graph) -> StateObservables:
    if space.n != g.n:
        raise ValueError(f"graph has {g.n} nodes, state space has {space.n}")
    wi, wr = space.infected, space.removed
    a = g.adjacency
    k = wi.sum(axis=1)
    inner = (wi @ a * wi).sum(axis=1)
    deg = wi @ g.degrees
    return StateObservables(
        z_i=k / g.n,
        z_r=wr.sum(axis=1) / g.n,
        cut=(wi @ g.laplacian * wi).sum(axis=1),
        mixed=(wi @ a * wr).sum(axis=1),
        deg=deg,
        inner=inner,
        pairs=k * (k - 1),
    )


@dataclass(frozen=True, eq=False)
class MomentSeries:
    """Exact moments of the prevalence observables along a grid (one entry per time)."""

    t_star: np.ndarray
    y_I: np.ndarray
    y_R: np.ndarray
    var_z: np.ndarray
    e_cut: np.ndarray
    e_mixed: np.ndarray
    e_z_cut: np.ndarray
    s_I: np.ndarray
    e_z2: np.ndarray
    e_deg: np.ndarray
    e_inner: np.ndarray
    n: int

    CSV_FIELDS = ("t_star", "y_I", "y_R", "var_z", "e_cut", "e_mixed", "e_z_cut", "s_I")

    def __len__(self):
        return self.t_star.size


def moments_from_dists(dists: np.ndarray, obs: StateObservables, grid, n: int) -> MomentSeries:
    d = np.atleast_2d(dists)
    y = d @ obs.z_i
    ez2 = d @ (obs.z_i**2)
    return MomentSeries(
        t_star=np.asarray(grid, dtype=float),
        y_I=y,
        y_R=d @ obs.z_r,
        var_z=ez2 - y**2,
        e_cut=d @ obs.cut,
        e_mixed=d @ obs.mixed,
        e_z_cut=d @ (obs.z_i * obs.cut),
        s_I=d @ obs.pairs,
        e_z2=ez2,
        e_deg=d @ obs.deg,
        e_inner=d @ obs.inner,
        n=n,
    )


def prevalence_moments(traj: DistributionTrajectory, g: Graph) -> MomentSeries:
    return moments_from_dists(traj.dists, state_observables(traj.space, g), traj.grid, g.n)


def _stencil(grid: np.ndarray, rel: float = 1e-6):
    """Indices of interior grid points with equal left/right spacing, and that spacing."""
    gaps = np.diff(grid)
    left, right = gaps[:-1], gaps[1:]
    ok = np.abs(left - right) <= rel * np.maximum(left, right)
    idx = np.flatnonzero(ok) + 1
    if idx.size == 0:
        raise ValueError("grid has no centred finite-difference stencil (need >= 3 equally spaced points)")
    return idx, gaps[idx]


def central_difference(values: np.ndarray, grid: np.ndarray):
    """Central-difference derivative along axis 0 at every stencil centre."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 3:
        raise ValueError("need at least 3 grid points")
    idx, h = _stencil(grid)
    v = np.asarray(values)
    shape = (-1,) + (1,) * (v.ndim - 1)
    return idx, (v[idx + 1] - v[idx - 1]) / (2.0 * h.reshape(shape))


def stencil_grid(times: Sequence[float], h: float = 1e-3) -> np.ndarray:
    """Grid containing ``0`` and the triplets ``t - h, t, t + h`` for each check time."""
    pts = {0.0}
    for t in times:
        if t - h <= 0:
            raise ValueError(f"check time {t} too close to 0 for step {h}")
        pts.update((t - h, float(t), t + h))
    return np.array(sorted(pts))


def governing_rhs(traj: DistributionTrajectory, g: Graph, p: EpidemicParams) -> np.ndarray:
    """Right-hand side of the nodal infection equations in scaled time, shape ``(T, N)``.

    Assembled only from marginals and pairwise joints:
    ``tau * sum_k a_kj P[k=I] - P[j=I] - tau * sum_k a_kj (P[j=I,k=I] + P[j=R,k=I])``,
    where the removed term is absent for SIS.
    """
    a = g.adjacency.astype(float)
    v = marginals(traj, "I")
    ii = pair_matrix(traj, "I", "I")
    rhs = p.tau * v @ a - v - p.tau * np.einsum("tjk,kj->tj", ii, a)
    if traj.space.model == SIR:
        ri = pair_matrix(traj, "R", "I")
        rhs -= p.tau * np.einsum("tjk,kj->tj", ri, a)
    return rhs


def residual_governing(traj: DistributionTrajectory, g: Graph, p: EpidemicParams, model=None) -> float:
    """Max |finite-difference dPr[j=I]/dt* - exact RHS| over nodes and stencil centres.

    For SIR this also includes the removal equation ``dPr[j=R]/dt* = Pr[j=I]``.
    """
    model = _model(model or traj.space.model)
    if model != traj.space.model:
        raise ValueError("model does not match trajectory")
    idx, dv = central_difference(marginals(traj, "I"), traj.grid)
    res = np.abs(dv - governing_rhs(traj, g, p)[idx]).max()
    if model == SIR:
        res = max(res, residual_removal(traj))
    return float(res)


def residual_removal(traj: DistributionTrajectory) -> float:
    """SIR removal equation residual, nodewise and for ``dy_R/dt* = y_I``."""
    if traj.space.model != SIR:
        raise ValueError("removal equation is SIR only")
    vi = marginals(traj, "I")
    idx, dr = central_difference(marginals(traj, "R"), traj.grid)
    node = np.abs(dr - vi[idx]).max()
    pop = np.abs(dr.mean(axis=1) - vi[idx].mean(axis=1)).max()
    return float(max(node, pop))


@dataclass(frozen=True)
class PrevalenceResidual:
    ode: float  # Laplacian form vs finite differences
    forms: float  # Laplacian form vs degree-vector form, pointwise


def residual_prevalence_ode(traj: DistributionTrajectory, g: Graph, p: EpidemicParams, model=None):
    model = _model(model or traj.space.model)
    m = prevalence_moments(traj, g)
    lap = -m.y_I + p.tau / g.n * (m.e_cut - m.e_mixed)
    degf = -m.y_I + p.tau / g.n * (m.e_deg - m.e_inner - m.e_mixed)
    forms = float(np.abs(lap - degf).max())
    idx, dy = central_difference(m.y_I, traj.grid)
    return PrevalenceResidual(ode=float(np.abs(dy - lap[idx]).max()), forms=forms)


def variance_rhs(m: MomentSeries, tau: float) -> np.ndarray:
    n = m.n
    return (
        -2.0 * m.var_z
        + 2.0 * tau / n * (m.e_z_cut - m.y_I * m.e_cut)
        + (m.y_I + tau / n * m.e_cut) / n
    )


def pair_sum_rhs(m: MomentSeries, tau: float) -> np.ndarray:
    return -2.0 * m.s_I + 2.0 * m.n * tau * m.e_z_cut


@dataclass(frozen=True)
class VarianceResidual:
    variance: float
    pair_sum: float


def residual_variance_ode(traj: DistributionTrajectory, g: Graph, p: EpidemicParams) -> VarianceResidual:
    if traj.space.model != SIS:
        raise ValueError("variance equation applies to SIS trajectories only")
    m = prevalence_moments(traj, g)
    idx, dvar = central_difference(m.var_z, traj.grid)
    _, ds = central_difference(m.s_I, traj.grid)
    return VarianceResidual(
        variance=float(np.abs(dvar - variance_rhs(m, p.tau)[idx]).max()),
        pair_sum=float(np.abs(ds - pair_sum_rhs(m, p.tau)[idx]).max()),
    )


def hierarchy_terms(subset, g: Graph, p: EpidemicParams) -> dict[frozenset, float]:
    """Expand ``d/dt E[prod_{j in subset} 1{X_j=I}]`` into ``{node set: coefficient}``.

    Each key stands for ``E[prod_{j in key} 1{X_j=I}]``. Products collapse by
    idempotency, so a key never has more than ``|subset| + 1`` nodes and, when
    the subset is the whole node set, never more than ``N``.
    """
    sub = frozenset(int(j) for j in subset)
    if not sub:
        raise ValueError("subset must be non-empty")
    if min(sub) < 0 or max(sub) >= g.n:
        raise ValueError("subset out of range")
    terms: dict[frozenset, float] = {sub: -p.delta * len(sub)}
    for m in sub:
        rest = sub - {m}
        for k in g.neighbors[m]:
            up = rest | {k}
            terms[up] = terms.get(up, 0.0) + p.beta
            full = sub | {k}
            terms[full] = terms.get(full, 0.0) - p.beta
    return {k: v for k, v in terms.items() if v != 0.0}


def moment_hierarchy_rhs(dist: np.ndarray, subset, g: Graph, p: EpidemicParams) -> float:
    """Time derivative (raw time) of a joint infection probability under ``dist``."""
    space = StateSpace(SIS, g.n)
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (space.size,):
        raise ValueError(f"dist must have length {space.size}")
    w = space.infected.astype(bool)
    total = 0.0
    for nodes, coef in hierarchy_terms(subset, g, p).items():
        mask = w[:, sorted(nodes)].all(axis=1)
        total += coef * dist[mask].sum()
    return float(total)


@dataclass(frozen=True, eq=False)
class QuasiStationary:
    """Quasi-stationary distribution of an SIS chain.

    ``probs`` is indexed by the full state space with zero on the absorbing
    all-susceptible state; ``decay_rate`` is the extinction rate in scaled time.
    """

    space: StateSpace
    probs: np.ndarray
    decay_rate: float
    iterations: int

    @property
    def transient(self) -> np.ndarray:
        return self.probs[1:]


def quasi_stationary(gen: Generator, tol: float = 1e-13, max_iter: int = 2_000_000, start=None) -> QuasiStationary:
    """Dominant left eigenvector of the generator restricted to transient states.

    Power iteration on ``I + G_sub / c`` with ``c = 1.01 * max|diag|``,
    renormalised to unit mass each step, until successive iterates differ by
    less than ``tol`` in the 1-norm.
    """
    if gen.space.model != SIS:
        raise ValueError("quasi-stationary distributions are computed for SIS only")
    sub = gen.rates[1:, 1:].tocsr()
    c = 1.01 * float(np.abs(sub.diagonal()).max())
    pt = (sp.identity(sub.shape[0], format="csr") + sub / c).T.tocsr()
    x = np.full(sub.shape[0], 1.0 / sub.shape[0]) if start is None else np.asarray(start, float)[1:].copy()
    x /= x.sum()
    mass = 1.0
    for it in range(1, max_iter + 1):
        y = pt @ x
        mass = y.sum()
        y /= mass
        if np.abs(y - x).sum() < tol:
            x = y
            break
        x = y
    else:
        raise ConvergenceError(f"QS power iteration did not converge in {max_iter} iterations", last=x, iterations=max_iter)
    probs = np.concatenate([[0.0], x])
    return QuasiStationary(gen.space, probs, c * (1.0 - mass) / gen.params.delta, it)


def link_conditionals(g: Graph, space: StateSpace, dist: np.ndarray) -> np.ndarray:
    """``Pr[X_k=I | X_l=I]`` for every ordered link ``(k, l)``; rows follow ``directed_links``."""
    w = space.infected.astype(float)
    pair = (w * dist[:, None]).T @ w
    v = np.diag(pair)
    links = directed_links(g)
    out = np.zeros(len(links))
    for n_, (k, l) in enumerate(links):
        out[n_] = pair[k, l] / v[l] if v[l] > 0 else 0.0
    return out


def directed_links(g: Graph) -> list[tuple[int, int]]:
    return [e for i, j in g.edges for e in ((i, j), (j, i))]


@dataclass(frozen=True)
class EpsilonEstimate:
    """Finite-N surrogate for the vanishing-prevalence limit of the max link conditional.

    ``estimate`` is taken at the smallest swept ``tau`` whose QS prevalence is
    still at least ``band``; ``extrapolated`` is a least-squares line of
    epsilon against prevalence evaluated at zero prevalence (clipped to
    ``[0, 1]``).
    """

    taus: tuple[float, ...]
    prevalence: tuple[float, ...]
    eps: tuple[float, ...]
    estimate: float
    extrapolated: float
    tau_at_band: float
    band: float
    converged: bool


def default_eps_taus(lambda1: float, steps: int = 12, hi: float = 1.5) -> np.ndarray:
    """Geometric sweep from ``hi / lambda1`` down to ``1 / lambda1``."""
    return np.geomspace(hi / lambda1, 1.0 / lambda1, steps)


def _epsilon_connected(g: Graph, taus, tol, band) -> EpsilonEstimate:
    space = StateSpace(SIS, g.n)
    obs = space.infected.sum(axis=1) / g.n
    prev, eps = [], []
    start = None
    for tau in taus:
        gen = build_sis_generator(g, EpidemicParams.from_tau(tau), max_nodes=SIS_HARD_CAP)
        qs = quasi_stationary(gen, tol=tol, start=start)
        start = qs.probs
        prev.append(float(qs.probs @ obs))
        eps.append(float(link_conditionals(g, space, qs.probs).max()))
    prev_a, eps_a = np.array(prev), np.array(eps)
    ok = np.flatnonzero(prev_a >= band)
    converged = ok.size > 0
    if converged:
        k = ok[np.argmin(np.asarray(taus)[ok])]
    else:
        k = int(np.argmax(prev_a))
    if len(taus) >= 2 and np.ptp(prev_a) > 0:
        slope, icpt = np.polyfit(prev_a, eps_a, 1)
        extra = float(np.clip(icpt, 0.0, 1.0))
    else:
        extra = float(eps_a[k])
    return EpsilonEstimate(
        taus=tuple(float(t) for t in taus),
        prevalence=tuple(prev),
        eps=tuple(eps),
        estimate=float(eps_a[k]),
        extrapolated=extra,
        tau_at_band=float(taus[k]),
        band=band,
        converged=converged,
    )


def epsilon_g(g: Graph, taus=None, tol: float = 1e-13, band: float | None = None):
    """Estimate the vanishing-prevalence max link conditional infection probability.

    Each connected component with at least one edge is treated separately
    (its own spectral radius, sweep and prevalence band ``2 / N_component``
    unless ``band`` is given); the result with the largest estimate is
    returned. ``taus`` must be strictly decreasing.
    """
    if g.m == 0:
        raise ValueError("epsilon_G needs at least one link")
    if taus is not None:
        taus = np.asarray(taus, dtype=float)
        if (np.diff(taus) >= 0).any():
            raise ValueError("tau sequence must be strictly decreasing")
    best = None
    for comp in g.components():
        if len(comp) < 2:
            continue
        sub = g.subgraph(comp)
        ts = taus if taus is not None else default_eps_taus(spectral_radius(sub).lambda1)
        est = _epsilon_connected(sub, ts, tol, 2.0 / sub.n if band is None else band)
        if best is None or est.estimate > best.estimate:
            best = est
    return best
