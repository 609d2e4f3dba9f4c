"""Undirected simple graphs, generators, spectral radius and quadratic forms."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FAMILIES = ("complete", "star", "cycle", "path", "erdos_renyi")


class GraphError(ValueError):
    """Malformed graph input."""


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap.

    ``last`` carries the final iterate (or estimate) so callers can inspect it.
    """

    def __init__(self, message, last=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Use :func:`build_graph` rather than the constructor; it validates the
    edge list and puts it in canonical (sorted, ``i < j``) order.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)

    @cached_property
    def degrees(self) -> np.ndarray:
        d = self.adjacency.sum(axis=1).astype(np.int64)
        d.flags.writeable = False
        return d

    @property
    def d_min(self) -> int:
        return int(self.degrees.min())

    @property
    def d_max(self) -> int:
        return int(self.degrees.max())

    @property
    def is_regular(self) -> bool:
        return self.d_min == self.d_max

    @property
    def r(self) -> int | None:
        """Common degree of a regular graph, else ``None``."""
        return self.d_min if self.is_regular else None

    @cached_property
    def laplacian(self) -> np.ndarray:
        q = np.diag(self.degrees) - self.adjacency
        q.flags.writeable = False
        return q

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in self.adjacency)

    @property
    def m(self) -> int:
        return len(self.edges)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))

    def to_edgelist(self) -> str:
        """Canonical edge-list text: ``N M`` header then one sorted edge per line."""
        lines = [f"{self.n} {self.m}"]
        lines.extend(f"{i} {j}" for i, j in self.edges)
        return "\n".join(lines) + "\n"

    def components(self) -> list[list[int]]:
        """Connected components as sorted node lists, ordered by smallest node."""
        seen = np.zeros(self.n, dtype=bool)
        comps = []
        for start in range(self.n):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self.neighbors[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        return comps

    def subgraph(self, nodes: Sequence[int]) -> "Graph":
        """Induced subgraph, relabelled ``0..len(nodes)-1`` in the given order."""
        index = {int(v): k for k, v in enumerate(nodes)}
        sub = [(index[i], index[j]) for i, j in self.edges if i in index and j in index]
        return build_graph(len(nodes), sub)


def build_graph(n: int, edges: Iterable[Sequence[int]], strict: bool = True) -> Graph:
    """Validate an edge list and return a :class:`Graph`.

    Self-loops and out-of-range indices are always rejected. Duplicate edges
    (in either orientation) are rejected when ``strict`` is true and silently
    merged otherwise.
    """
    n = int(n)
    if n < 1:
        raise GraphError(f"node count must be >= 1, got {n}")
    seen = set()
    for e in edges:
        if len(e) != 2:
            raise GraphError(f"edge {e!r} is not a pair")
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
        key = (min(i, j), max(i, j))
        if key in seen and strict:
            raise GraphError(f"duplicate edge {key}")
        seen.add(key)
    canon = tuple(sorted(seen))
    adj = np.zeros((n, n), dtype=np.int64)
    for i, j in canon:
        adj[i, j] = adj[j, i] = 1
    adj.flags.writeable = False
    return Graph(n=n, edges=canon, adjacency=adj)


def generate_family(family: str, n: int, p: float | None = None, seed: int | None = None) -> Graph:
    """Deterministic graph generators.

    ``star`` puts the hub at node 0. ``erdos_renyi`` visits pairs ``i < j`` in
    lexicographic order and keeps each with probability ``p`` using a
    ``numpy`` PCG64 stream seeded by ``seed``.
    """
    if n < 1:
        raise GraphError(f"node count must be >= 1, got {n}")
    if family == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif family == "star":
        edges = [(0, j) for j in range(1, n)]
    elif family == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif family == "cycle":
        if n < 3:
            raise GraphError("a simple cycle needs n >= 3")
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif family == "erdos_renyi":
        if p is None or not 0.0 <= p <= 1.0:
            raise GraphError(f"erdos_renyi needs 0 <= p <= 1, got {p}")
        rng = np.random.default_rng(0 if seed is None else seed)
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < p
        edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    else:
        raise GraphError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return build_graph(n, edges)


def parse_edgelist(text: str, strict: bool = True) -> Graph:
    """Parse the ``N M`` / ``i j`` edge-list format (``#`` comments allowed)."""
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise GraphError("empty edge list")
    try:
        header = [int(x) for x in rows[0]]
        pairs = [(int(a), int(b)) for a, b in rows[1:]]
    except ValueError as exc:
        raise GraphError(f"malformed edge list: {exc}") from None
    if len(header) != 2:
        raise GraphError("header must be 'N M'")
    n, m = header
    if m != len(pairs):
        raise GraphError(f"header declares {m} edges, found {len(pairs)}")
    return build_graph(n, pairs, strict=strict)


def read_edgelist(path, strict: bool = True) -> Graph:
    return parse_edgelist(Path(path).read_text(), strict=strict)


def write_edgelist(g: Graph, path) -> None:
    Path(path).write_text(g.to_edgelist(), newline="\n")


@dataclass(frozen=True)
class SpectralData:
    lambda1: float
    tolerance: float
    iterations: int


def spectral_radius(g: Graph, tol: float = 1e-10, max_iter: int = 100_000) -> SpectralData:
    """Largest adjacency eigenvalue by power iteration.

    Iterates on ``A + I`` from ``u / sqrt(N)`` so that bipartite graphs (where
    ``-lambda1`` is also an eigenvalue) still converge, and stops once the
    Rayleigh-quotient residual ``||A x - rho x||`` drops below ``tol``. For a
    symmetric matrix that residual bounds the distance from ``rho`` to the
    spectrum.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = g.adjacency.astype(float)
    x = np.full(g.n, 1.0 / np.sqrt(g.n))
    rho = 0.0
    for it in range(1, max_iter + 1):
        ax = a @ x
        rho = float(x @ ax)
        resid = float(np.linalg.norm(ax - rho * x))
        if resid <= tol:
            return SpectralData(lambda1=rho, tolerance=tol, iterations=it)
        y = ax + x
        x = y / np.linalg.norm(y)
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations", last=rho, iterations=max_iter
    )


def indicator(g: Graph, nodes) -> np.ndarray:
    """0/1 integer vector of a node subset (iterable of indices or boolean mask)."""
    arr = np.asarray(nodes)
    if arr.dtype == bool:
        if arr.shape != (g.n,):
            raise GraphError(f"mask must have shape ({g.n},)")
        return arr.astype(np.int64)
    w = np.zeros(g.n, dtype=np.int64)
    idx = arr.astype(np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= g.n):
        raise GraphError(f"subset indices out of range for n={g.n}")
    w[idx] = 1
    return w


def laplacian_quadratic(g: Graph, infected_set) -> int:
    """``w^T Q w`` for the indicator ``w`` of the set: the number of cut edges."""
    w = indicator(g, infected_set)
    return int(sum(w[i] != w[j] for i, j in g.edges))


def mixed_quadratic(g: Graph, set_a, set_b) -> int:
    """``w_a^T A w_b``: ordered adjacent pairs ``(i, j)`` with ``i in a``, ``j in b``."""
    return int(indicator(g, set_a) @ g.adjacency @ indicator(g, set_b))


def state_cuts(g: Graph, w: np.ndarray) -> np.ndarray:
    """Row-wise ``w^T Q w`` for a stack of indicator rows (shape ``(S, N)``)."""
    w = np.asarray(w, dtype=np.int64)
    return (w @ g.laplacian * w).sum(axis=1)


def state_mixed(g: Graph, wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """Row-wise ``w_a^T A w_b`` for stacked indicator rows."""
    return (np.asarray(wa, dtype=np.int64) @ g.adjacency * np.asarray(wb, dtype=np.int64)).sum(axis=1)
