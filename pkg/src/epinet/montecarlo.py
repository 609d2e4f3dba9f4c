"""Event-driven (Gillespie) simulation of SIS/SIR on a graph.

All times are scaled, ``t* = delta * t``: curing happens at rate 1 per
infected node and infection at rate ``tau`` per susceptible-infected link.

Random streams come from numpy's PCG64. A run with index ``k`` inside an
ensemble seeded by ``master_seed`` uses ``SeedSequence([master_seed, k])``,
which hash-mixes the pair into independent 128-bit stream states.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exact import SIR, SIS, EpidemicParams, _model
from .graph import Graph

INFECT, CURE, REMOVE = 0, 1, 2
EVENT_NAMES = ("infect", "cure", "remove")

_BLOCK = 4096


class _Uniforms:
    """Block-buffered uniform draws from a numpy Generator."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = rng.random(_BLOCK).tolist()
        self.i = 0

    def __call__(self) -> float:
        if self.i == _BLOCK:
            self.buf = self.rng.random(_BLOCK).tolist()
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return u


class _Bag:
    """Set with O(1) add, remove and uniform indexing."""

    __slots__ = ("items", "pos")

    def __init__(self):
        self.items = []
        self.pos = {}

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x):
        k = self.pos.pop(x, None)
        if k is None:
            return
        last = self.items.pop()
        if k < len(self.items):
            self.items[k] = last
            self.pos[last] = k

    def __len__(self):
        return len(self.items)


def run_rng(master_seed: int, run_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(run_index)]))


class _Epidemic:
    """Mutable simulation state with O(degree) updates per event."""

    def __init__(self, g: Graph, model: str, tau: float):
        self.g = g
        self.model = model
        self.tau = tau
        self.nbrs = g.neighbors
        self.state = [0] * g.n  # 0 S, 1 I, 2 R
        self.infected = _Bag()
        self.si = _Bag()  # directed (infected, susceptible) links

    def reset(self, infected: Iterable[int], removed: Iterable[int] = ()):
        self.state = [0] * self.g.n
        self.infected = _Bag()
        self.si = _Bag()
        for j in removed:
            self.state[j] = 2
        for j in infected:
            self.state[j] = 1
            self.infected.add(j)
        for i in self.infected.items:
            for j in self.nbrs[i]:
                if self.state[j] == 0:
                    self.si.add((i, j))

    def total_rate(self) -> float:
        return len(self.infected) + self.tau * len(self.si)

    def pick(self, x: float) -> tuple[int, int]:
        """Map ``x`` uniform on ``[0, total_rate)`` to ``(node, event kind)``."""
        ni = len(self.infected)
        if x < ni:
            node = self.infected.items[min(int(x), ni - 1)]
            return node, (CURE if self.model == SIS else REMOVE)
        k = min(int((x - ni) / self.tau), len(self.si) - 1)
        return self.si.items[k][1], INFECT

    def apply(self, node: int, kind: int):
        st, nb = self.state, self.nbrs[node]
        if kind == INFECT:
            st[node] = 1
            self.infected.add(node)
            for v in nb:
                if st[v] == 1:
                    self.si.discard((v, node))
                elif st[v] == 0:
                    self.si.add((node, v))
        else:
            st[node] = 0 if kind == CURE else 2
            self.infected.discard(node)
            for v in nb:
                if st[v] == 0:
                    self.si.discard((node, v))
                elif st[v] == 1 and kind == CURE:
                    self.si.add((v, node))


@dataclass(frozen=True, eq=False)
class EventTrace:
    model: str
    n: int
    seed: object
    init: tuple[int, ...]
    final_time: float
    times: np.ndarray
    nodes: np.ndarray
    kinds: np.ndarray

    @property
    def events(self) -> list[tuple[float, int, str]]:
        return [(float(t), int(v), EVENT_NAMES[k]) for t, v, k in zip(self.times, self.nodes, self.kinds)]

    def __len__(self):
        return self.times.size

    def states_at(self, grid: Sequence[float]) -> np.ndarray:
        """Compartment codes of every node at each grid time, shape ``(len(grid), n)``.

        The state at time ``t`` includes every event with time ``<= t``.
        """
        grid = np.asarray(grid, dtype=float)
        out = np.zeros((grid.size, self.n), dtype=np.int8)
        cur = np.zeros(self.n, dtype=np.int8)
        cur[list(self.init)] = 1
        new_code = np.array([1, 0, 2], dtype=np.int8)[self.kinds]
        cut = np.searchsorted(self.times, grid, side="right")
        e = 0
        for k, c in enumerate(cut):
            while e < c:
                cur[self.nodes[e]] = new_code[e]
                e += 1
            out[k] = cur
        return out


def simulate(model, g: Graph, p: EpidemicParams, init: Iterable[int], horizon: float, seed=None, rng=None) -> EventTrace:
    """One exact stochastic realisation up to scaled time ``horizon``."""
    model = _model(model)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    init = tuple(sorted({int(j) for j in init}))
    if init and (init[0] < 0 or init[-1] >= g.n):
        raise ValueError("initial infected nodes out of range")
    rng = rng if rng is not None else np.random.default_rng(seed)
    u = _Uniforms(rng)
    ep = _Epidemic(g, model, p.tau)
    ep.reset(init)
    times, nodes, kinds = [], [], []
    t = 0.0
    while True:
        total = ep.total_rate()
        if total <= 0.0:
            break
        t += -math.log(1.0 - u()) / total
        if t > horizon:
            break
        node, kind = ep.pick(u() * total)
        ep.apply(node, kind)
        times.append(t)
        nodes.append(node)
        kinds.append(kind)
    return EventTrace(
        model=model,
        n=g.n,
        seed=seed,
        init=init,
        final_time=float(horizon),
        times=np.array(times, dtype=float),
        nodes=np.array(nodes, dtype=np.int64),
        kinds=np.array(kinds, dtype=np.int8),
    )


def validate_trace(trace: EventTrace, g: Graph) -> None:
    """Raise ``AssertionError`` if a trace breaks the model's transition rules."""
    st = [0] * g.n
    for j in trace.init:
        st[j] = 1
    infected_once = set(trace.init)
    last = 0.0
    for t, v, k in zip(trace.times, trace.nodes, trace.kinds):
        assert t > last, f"event times not strictly increasing at t={t}"
        assert t <= trace.final_time
        last = t
        if k == INFECT:
            assert st[v] == 0, f"infect event on non-susceptible node {v}"
            assert any(st[w] == 1 for w in g.neighbors[v]), f"node {v} infected without infected neighbour"
            if trace.model == SIR:
                assert v not in infected_once, f"SIR node {v} infected twice"
                infected_once.add(v)
            st[v] = 1
        elif k == CURE:
            assert trace.model == SIS and st[v] == 1
            st[v] = 0
        elif k == REMOVE:
            assert trace.model == SIR and st[v] == 1
            st[v] = 2
        else:
            raise AssertionError(f"unknown event kind {k}")


OBSERVABLES = ("zI", "zR", "cut", "mixed", "zcut")


def observables_from_states(g: Graph, states: np.ndarray) -> dict[str, np.ndarray]:
    """Per-snapshot ``Z_I, Z_R, w_I^T Q w_I, w_I^T A w_R, Z_I w_I^T Q w_I``."""
    wi = (states == 1).astype(np.int64)
    wr = (states == 2).astype(np.int64)
    zi = wi.sum(axis=1) / g.n
    cut = (wi @ g.laplacian * wi).sum(axis=1)
    return {
        "zI": zi,
        "zR": wr.sum(axis=1) / g.n,
        "cut": cut.astype(float),
        "mixed": (wi @ g.adjacency * wr).sum(axis=1).astype(float),
        "zcut": zi * cut,
    }


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    grid: np.ndarray
    runs: int
    master_seed: int
    mean: dict = field(repr=False)
    se: dict = field(repr=False)
    var_zI: np.ndarray = field(repr=False)

    CSV_FIELDS = (
        "t_star", "mean_zI", "se_zI", "var_zI", "mean_zR", "se_zR", "mean_cut", "se_cut",
        "mean_mixed", "se_mixed", "mean_zcut", "se_zcut",
    )

    def rows(self):
        for k, t in enumerate(self.grid):
            yield (
                t, self.mean["zI"][k], self.se["zI"][k], self.var_zI[k], self.mean["zR"][k], self.se["zR"][k],
                self.mean["cut"][k], self.se["cut"][k], self.mean["mixed"][k], self.se["mixed"][k],
                self.mean["zcut"][k], self.se["zcut"][k],
            )


def _run_block(args):
    model, g, p, init, horizon, grid, master_seed, indices = args
    out = np.empty((len(indices), len(OBSERVABLES), len(grid)))
    for r, k in enumerate(indices):
        trace = simulate(model, g, p, init, horizon, seed=(master_seed, k), rng=run_rng(master_seed, k))
        obs = observables_from_states(g, trace.states_at(grid))
        for c, name in enumerate(OBSERVABLES):
            out[r, c] = obs[name]
    return indices, out


def ensemble(model, g: Graph, p: EpidemicParams, init, horizon: float, runs: int, grid, master_seed: int = 0, workers: int = 1) -> EnsembleStats:
    """Sample means and standard errors of the prevalence observables over ``runs`` runs.

    Runs are reduced in run-index order, so the result does not depend on
    ``workers``.
    """
    model = _model(model)
    if runs < 2:
        raise ValueError("need at least 2 runs")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or grid.min() < 0 or grid.max() > horizon:
        raise ValueError("grid must lie within [0, horizon]")
    init = tuple(sorted({int(j) for j in init}))
    data = np.empty((runs, len(OBSERVABLES), grid.size))
    workers = max(1, int(workers))
    blocks = [list(range(k, runs, workers)) for k in range(workers)] if workers > 1 else [list(range(runs))]
    jobs = [(model, g, p, init, horizon, grid, master_seed, b) for b in blocks if b]
    if workers == 1:
        results = map(_run_block, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_run_block, jobs)
    for idx, block in results:
        data[idx] = block
    if workers > 1:
        pool.shutdown()
    mean = {name: data[:, c].mean(axis=0) for c, name in enumerate(OBSERVABLES)}
    se = {name: data[:, c].std(axis=0, ddof=1) / math.sqrt(runs) for c, name in enumerate(OBSERVABLES)}
    return EnsembleStats(
        grid=grid, runs=runs, master_seed=master_seed, mean=mean, se=se, var_zI=data[:, 0].var(axis=0, ddof=1)
    )


@dataclass(frozen=True)
class Peak:
    t_peak: float
    y_max: float
    index: int
    boundary: bool


def peak_prevalence(series) -> Peak:
    """Maximum of the prevalence curve with 3-point parabolic refinement.

    Accepts :class:`EnsembleStats` (uses ``mean['zI']``), an exact
    ``MomentSeries`` (uses ``y_I``), or a ``(grid, values)`` pair. When the
    maximum sits on the first or last grid point no refinement is made and
    ``boundary`` is set.
    """
    if isinstance(series, EnsembleStats):
        t, y = series.grid, series.mean["zI"]
    elif hasattr(series, "y_I"):
        t, y = series.t_star, series.y_I
    else:
        t, y = series
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty series")
    k = int(np.argmax(y))
    if k == 0 or k == y.size - 1:
        return Peak(float(t[k]), float(y[k]), k, True)
    a, b, c = np.polyfit(t[k - 1 : k + 2] - t[k], y[k - 1 : k + 2], 2)
    if a >= 0:
        return Peak(float(t[k]), float(y[k]), k, False)
    dt = -b / (2 * a)
    return Peak(float(t[k] + dt), float(c - b * b / (4 * a)), k, False)


@dataclass(frozen=True)
class QSEstimate:
    """Time averages of an SIS run with reservoir restarts after ``burn_in``."""

    tau: float
    y_qs: float
    y_se: float
    var_z: float
    chi: float
    e_cut: float
    eps_link_max: float
    extinctions: int
    measured_time: float
    low_occupancy: bool


def qs_simulate(
    g: Graph,
    p: EpidemicParams,
    burn_in: float = 100.0,
    samples: int = 1000,
    seed=None,
    reservoir: int = 100,
    sample_interval: float = 1.0,
    replace_prob: float = 0.02,
    batches: int = 20,
    init=None,
) -> QSEstimate:
    """Quasi-stationary SIS estimates by simulation with reservoir restarts.

    On absorption the process restarts from a configuration drawn uniformly
    from a reservoir of up to ``reservoir`` previously visited active
    configurations. After each event the current configuration replaces a
    uniformly chosen reservoir slot with probability ``replace_prob``.
    Averages are continuous-time weighted over ``samples * sample_interval``
    units after ``burn_in``; ``y_se`` comes from ``batches`` batch means.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if g.m == 0:
        raise ValueError("graph has no links; the quasi-stationary state is a single isolated infection")
    rng = np.random.default_rng(seed)
    u = _Uniforms(rng)
    ep = _Epidemic(g, SIS, p.tau)
    start = tuple(range(g.n)) if init is None else tuple(init)
    ep.reset(start)
    pool = [start]
    n = g.n
    t_end = burn_in + samples * sample_interval
    batches = max(1, min(batches, samples))
    batch_len = (t_end - burn_in) / batches

    # integrals over the measurement window
    acc_z = acc_z2 = acc_cut = 0.0
    batch_z = np.zeros(batches)
    node_time = np.zeros(n)  # time each node spent infected
    links = list(g.edges)
    link_index = {}
    for e, (a, b) in enumerate(links):
        link_index[(a, b)] = link_index[(b, a)] = e
    link_time = np.zeros(len(links))  # time both ends infected
    node_since = [burn_in] * n
    link_since = [burn_in] * len(links)

    def settle(node, now):
        # accumulate node and incident-link occupancy before ``node`` changes state
        if now <= burn_in:
            return
        st = ep.state
        if st[node] == 1:
            node_time[node] += now - max(node_since[node], burn_in)
        node_since[node] = now
        for v in ep.nbrs[node]:
            e = link_index[(node, v)]
            if st[node] == 1 and st[v] == 1:
                link_time[e] += now - max(link_since[e], burn_in)
            link_since[e] = now

    def accumulate(t0, t1):
        nonlocal acc_z, acc_z2, acc_cut
        lo, hi = max(t0, burn_in), min(t1, t_end)
        if hi <= lo:
            return
        z = len(ep.infected) / n
        acc_z += z * (hi - lo)
        acc_z2 += z * z * (hi - lo)
        acc_cut += len(ep.si) * (hi - lo)
        b0 = int((lo - burn_in) / batch_len)
        while lo < hi and b0 < batches:
            edge = burn_in + (b0 + 1) * batch_len
            seg = min(hi, edge) - lo
            batch_z[b0] += z * seg
            lo += seg
            b0 += 1

    t = 0.0
    extinctions = 0
    while t < t_end:
        total = ep.total_rate()
        dt = -math.log(1.0 - u()) / total
        t_next = min(t + dt, t_end)
        accumulate(t, t_next)
        if t + dt >= t_end:
            t = t_end
            break
        t += dt
        node, kind = ep.pick(u() * total)
        settle(node, t)
        ep.apply(node, kind)
        if len(ep.infected) == 0:
            extinctions += 1
            restart = pool[min(int(u() * len(pool)), len(pool) - 1)]
            for j in restart:
                settle(j, t)
            ep.reset(restart)
        elif u() < replace_prob:
            snap = tuple(ep.infected.items)
            if len(pool) < reservoir:
                pool.append(snap)
            else:
                pool[min(int(u() * reservoir), reservoir - 1)] = snap
    for j in range(n):
        settle(j, t_end)

    span = t_end - burn_in
    y = acc_z / span
    var = max(acc_z2 / span - y * y, 0.0)
    bz = batch_z / batch_len
    y_se = float(bz.std(ddof=1) / math.sqrt(batches)) if batches > 1 else float("nan")
    occ = node_time / span
    eps = 0.0
    for e, (a, b) in enumerate(links):
        both = link_time[e] / span
        for cond in (occ[a], occ[b]):
            if cond > 0:
                eps = max(eps, both / cond)
    low = extinctions > 0.5 * span or y < 1.0 / n
    if low:
        warnings.warn(f"low quasi-stationary occupancy at tau={p.tau:.4g}: {extinctions} extinctions in {span:g} time units")
    return QSEstimate(
        tau=p.tau,
        y_qs=float(y),
        y_se=y_se,
        var_z=float(var),
        chi=float(n * var / y) if y > 0 else 0.0,
        e_cut=float(acc_cut / span),
        eps_link_max=float(eps),
        extinctions=extinctions,
        measured_time=float(span),
        low_occupancy=bool(low),
    )


def default_workers() -> int:
    env = os.environ.get("EPINET_THREADS")
    return max(1, int(env)) if env else 1
