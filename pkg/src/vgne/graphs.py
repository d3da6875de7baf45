"""Communication graphs, consensus weights and switching schedules."""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ContractViolation


def contraction_theta(W):
    """Spectral norm of ``W - (1/N) 11^T``."""
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    return float(np.linalg.norm(W - np.full((N, N), 1.0 / N), 2))


@dataclass(frozen=True, eq=False)
class CommGraph:
    """Undirected graph with a doubly stochastic weight matrix ``W``."""

    adjacency: np.ndarray
    W: np.ndarray

    @property
    def N(self):
        return self.W.shape[0]

    @cached_property
    def theta(self):
        return contraction_theta(self.W)

    @property
    def connected(self):
        return is_connected(self.adjacency)

    @cached_property
    def in_neighbors(self):
        """For each node, the nodes it reads from (including itself)."""
        return [tuple(np.flatnonzero(self.W[i])) for i in range(self.N)]

    def weights(self, k=0):
        return self.W

    def graph_at(self, k=0):
        return self


def is_connected(adjacency):
    adj = np.asarray(adjacency, dtype=bool)
    N = adj.shape[0]
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == N


def _check_adjacency(adjacency):
    adj = np.asarray(adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ContractViolation("adjacency must be square")
    if not np.array_equal(adj, adj.T):
        raise ContractViolation("adjacency must be symmetric")
    if adj.diagonal().any():
        raise ContractViolation("adjacency must have an empty diagonal")
    return adj


def metropolis_weights(adjacency):
    """Metropolis-Hastings weights ``w_ij = 1 / (1 + max(d_i, d_j))``.

    The diagonal absorbs the remaining mass, so ``W`` is symmetric, doubly
    stochastic and has ``w_ii >= 1 / (1 + d_max)``.  A disconnected graph is
    returned as is, with ``theta == 1``; it is only useful inside a schedule.
    """
    adj = _check_adjacency(adjacency)
    N = adj.shape[0]
    deg = adj.sum(axis=1)
    W = np.zeros((N, N))
    for i, j in zip(*np.nonzero(adj)):
        W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices(N)] = 1.0 - W.sum(axis=1)
    return CommGraph(adj, W)


def ring_graph(N):
    adj = np.zeros((N, N), dtype=bool)
    if N > 1:
        for i in range(N):
            adj[i, (i + 1) % N] = adj[(i + 1) % N, i] = True
    return adj


def path_graph(N):
    adj = np.zeros((N, N), dtype=bool)
    for i in range(N - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return adj


def complete_graph(N):
    return ~np.eye(N, dtype=bool)


def random_graph(N, p, seed, connected=True, max_tries=10_000):
    """Erdos-Renyi graph; resampled until connected when ``connected`` is set."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        upper = np.triu(rng.random((N, N)) < p, k=1)
        adj = upper | upper.T
        if not connected or is_connected(adj):
            return adj
    raise RuntimeError(f"no connected graph with N={N}, p={p} in {max_tries} draws")


def matching_graph(N, pairs):
    adj = np.zeros((N, N), dtype=bool)
    for i, j in pairs:
        adj[i, j] = adj[j, i] = True
    return adj


@dataclass(frozen=True, eq=False)
class GraphSchedule:
    """Periodic sequence of graphs ``k -> graphs[k % len(graphs)]``.

    ``Q`` is the window length used in the joint-connectivity check.
    """

    graphs: tuple
    Q: int

    @property
    def N(self):
        return self.graphs[0].N

    def graph_at(self, k):
        return self.graphs[k % len(self.graphs)]

    def weights(self, k):
        return self.graph_at(k).W


def alternating_matchings(N):
    """Two perfect matchings of an even ring; each alone is disconnected."""
    if N % 2 or N < 4:
        raise ContractViolation("alternating matchings need an even N >= 4")
    even = [(i, i + 1) for i in range(0, N, 2)]
    odd = [(i, (i + 1) % N) for i in range(1, N, 2)]
    return GraphSchedule(
        (metropolis_weights(matching_graph(N, even)),
         metropolis_weights(matching_graph(N, odd))),
        Q=2,
    )


def windowed_contraction(schedule, k):
    """``|| W^{kQ} W^{kQ+1} ... W^{(k+1)Q} - (1/N) 11^T ||``.

    The window runs from ``kQ`` to ``(k+1)Q`` inclusive.
    """
    N = schedule.N
    prod = np.eye(N)
    for j in range(k * schedule.Q, (k + 1) * schedule.Q + 1):
        prod = prod @ schedule.weights(j)
    return contraction_theta(prod)


def edges(adjacency):
    adj = np.asarray(adjacency, dtype=bool)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(adj, k=1)))]


def write_edge_list(adjacency, path):
    """One ``i j`` pair per line, 0-indexed, each undirected edge once."""
    lines = [f"{i} {j}\n" for i, j in edges(adjacency)]
    Path(path).write_text("".join(lines))


def read_edge_list(path, N):
    adj = np.zeros((N, N), dtype=bool)
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        i, j = (int(tok) for tok in line.split())
        if i == j:
            raise ContractViolation(f"self-loop {i} {j} in edge list")
        adj[i, j] = adj[j, i] = True
    return adj
