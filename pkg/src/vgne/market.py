"""Peer-to-peer energy market clearing as an aggregative game.

Each prosumer ``i`` decides, per time slot, its purchase from the main grid
``x_mg``, its dispatchable generation ``x_dg`` and its bilateral purchases
``x_tr[j]`` from every trading neighbour ``j``.  Its cost per slot is

    c_mg * sigma_mg * x_mg + c_dg (x_dg - ref)^2
      + sum_j (c_tr x_tr[j] + kappa_tr x_tr[j]^2) + G(x_mg) + G(x_dg),

where ``sigma_mg`` is the total grid purchase and ``G`` a smoothed log
barrier.  Trades are coupled by reciprocity ``x_tr[i,j] + x_tr[j,i] = 0``;
the per-agent power balance ``sum_j x_tr[j] + x_mg + x_dg = demand`` is a
private constraint with a locally held multiplier.

Agent decision vectors are slot-major: slot ``t`` occupies
``[t*w_i, (t+1)*w_i)`` with layout ``[mg, dg, tr_1, ..., tr_d]`` and
neighbours in ascending order.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .game import Game
from .graphs import edges, random_graph
from .online import GameSequence


def barrier(y, gamma):
    """``-log(y)`` for ``y > 1/gamma``, continued linearly below with slope ``-gamma``."""
    y = np.asarray(y, dtype=float)
    knot = 1.0 / gamma
    lin = -gamma * y + 1.0 - np.log(knot)
    log = -np.log(np.maximum(y, knot))
    return np.where(y > knot, log, lin)


def barrier_grad(y, gamma):
    y = np.asarray(y, dtype=float)
    knot = 1.0 / gamma
    return np.where(y > knot, -1.0 / np.maximum(y, knot), -gamma)


@dataclass(frozen=True)
class ProsumerSpec:
    """Cost coefficients and profiles of one prosumer."""

    demand: np.ndarray
    dg_ref: np.ndarray
    c_mg: float = 0.1
    c_dg: float = 0.3
    c_tr: float = 0.05
    kappa_tr: float = 0.1
    gamma: float = 1e3

    def __post_init__(self):
        if self.kappa_tr <= 0:
            raise ValueError("kappa_tr must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class MarketLayout:
    """Index bookkeeping shared by the day-ahead and per-slot games."""

    N: int
    T: int
    neighbors: tuple
    pairs: tuple = field(default=())

    @classmethod
    def from_graph(cls, trading_graph, T):
        adj = np.asarray(trading_graph, dtype=bool)
        N = adj.shape[0]
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(adj[i])) for i in range(N))
        return cls(N, T, nbrs, tuple(edges(adj)))

    def width(self, i):
        return 2 + len(self.neighbors[i])

    @property
    def dims(self):
        return tuple(self.T * self.width(i) for i in range(self.N))

    def trade_col(self, i, j):
        return 2 + self.neighbors[i].index(j)

    def index(self, i, t, col):
        return t * self.width(i) + col

    @property
    def m(self):
        return len(self.pairs) * self.T

    def row(self, p, t):
        """Reciprocity row of pair ``p`` in slot ``t`` (slot-major)."""
        return t * len(self.pairs) + p

    def slots(self, i, x_i):
        return x_i.reshape(self.T, self.width(i))


def _reciprocity_blocks(lay):
    rows = [[] for _ in range(lay.N)]
    cols = [[] for _ in range(lay.N)]
    for p, (i, j) in enumerate(lay.pairs):
        for t in range(lay.T):
            r = lay.row(p, t)
            rows[i].append(r)
            cols[i].append(lay.index(i, t, lay.trade_col(i, j)))
            rows[j].append(r)
            cols[j].append(lay.index(j, t, lay.trade_col(j, i)))
    return tuple(
        sp.csr_array((np.ones(len(rows[i])), (rows[i], cols[i])),
                     shape=(lay.m, lay.dims[i]))
        for i in range(lay.N)
    )


def _balance_block(lay, i):
    w = lay.width(i)
    rows = np.repeat(np.arange(lay.T), w)
    cols = np.arange(lay.T * w)
    return sp.csr_array((np.ones(lay.T * w), (rows, cols)), shape=(lay.T, lay.T * w))


def _agent_oracles(lay, i, spec, demand, ref):
    N = lay.N
    w = lay.width(i)
    T = lay.T
    # constant Jacobian of phi_i; dense because it is applied transposed every step
    sel = np.zeros((T, T * w))
    sel[np.arange(T), np.arange(T) * w] = float(N)

    def grad_local(x, s):
        X = x.reshape(T, w)
        g = np.empty_like(X)
        g[:, 0] = spec.c_mg * s + barrier_grad(X[:, 0], spec.gamma)
        g[:, 1] = 2.0 * spec.c_dg * (X[:, 1] - ref) + barrier_grad(X[:, 1], spec.gamma)
        g[:, 2:] = spec.c_tr + 2.0 * spec.kappa_tr * X[:, 2:]
        return g.ravel()

    def grad_agg(x, s):
        return spec.c_mg * x[0::w]

    def phi(x):
        # (1/N) sum_i phi_i reproduces the plain sum of grid purchases
        return N * x[0::w]

    def dphi(x):
        return sel

    return grad_local, grad_agg, phi, dphi


def _build(specs, trading_graph, t0, T, name):
    lay = MarketLayout.from_graph(trading_graph, T)
    if len(specs) != lay.N:
        raise ValueError("one ProsumerSpec per node of the trading graph")
    sl = slice(t0, t0 + T)
    oracles = [
        _agent_oracles(lay, i, s, np.asarray(s.demand, float)[sl],
                       np.asarray(s.dg_ref, float)[sl])
        for i, s in enumerate(specs)
    ]
    return Game(
        dims=lay.dims,
        q=T,
        grad_local=tuple(o[0] for o in oracles),
        grad_agg=tuple(o[1] for o in oracles),
        phi=tuple(o[2] for o in oracles),
        dphi=tuple(o[3] for o in oracles),
        A_blocks=_reciprocity_blocks(lay),
        b_blocks=tuple(np.zeros(lay.m) for _ in range(lay.N)),
        C_blocks=tuple(_balance_block(lay, i) for i in range(lay.N)),
        d_blocks=tuple(np.asarray(s.demand, float)[sl].copy() for s in specs),
        name=name,
    ), lay


def build_dayahead_game(specs, trading_graph, T=96):
    """All ``T`` slots stacked into one static game."""
    game, _ = _build(specs, trading_graph, 0, T, f"dayahead-T{T}")
    return game


def build_slot_game(specs, trading_graph, t):
    """Single-slot game for 0-based slot ``t``."""
    game, _ = _build(specs, trading_graph, t, 1, f"slot-{t}")
    return game


def build_realtime_sequence(specs, trading_graph, T=96, K=1):
    """Time-varying game: at ``t = 1..T`` the agents see slot ``t - 1`` only."""
    cache = {}

    def instance(t):
        if not 1 <= t <= T:
            raise IndexError(f"time {t} outside 1..{T}")
        if t not in cache:
            cache[t] = build_slot_game(specs, trading_graph, t - 1)
        return cache[t]

    return GameSequence(instance, K=K)


def layout(specs, trading_graph, T):
    return MarketLayout.from_graph(trading_graph, T)


def slot_solution(lay, omega, t):
    """Restrict a day-ahead ``omega`` to 0-based slot ``t`` (per-slot ordering)."""
    dims = lay.dims
    n = sum(dims)
    x = omega[:n]
    xs, o = [], 0
    for i in range(lay.N):
        xs.append(x[o:o + dims[i]].reshape(lay.T, lay.width(i))[t])
        o += dims[i]
    P = len(lay.pairs)
    lam = omega[n:n + lay.m][t * P:(t + 1) * P]
    mu = omega[n + lay.m:].reshape(lay.N, lay.T)[:, t]
    return np.concatenate([*xs, lam, mu])


def assemble_dayahead(lay, slot_omegas):
    """Inverse of ``slot_solution``: stack per-slot ``omega`` into day-ahead order.

    The slots of the day-ahead game do not interact, so its equilibrium is
    the concatenation of the per-slot equilibria.
    """
    if len(slot_omegas) != lay.T:
        raise ValueError(f"need {lay.T} slot solutions, got {len(slot_omegas)}")
    widths = [lay.width(i) for i in range(lay.N)]
    n1 = sum(widths)
    P = len(lay.pairs)
    S = np.asarray(slot_omegas, dtype=float)
    xs, o = [], 0
    for w in widths:
        xs.append(S[:, o:o + w].ravel())
        o += w
    lam = S[:, n1:n1 + P].ravel()
    mu = S[:, n1 + P:].T.ravel()
    return np.concatenate([*xs, lam, mu])


def reciprocity_violation(game, x):
    """Largest ``|x_tr[i,j] + x_tr[j,i]|`` over pairs and slots."""
    r = game.A @ x
    return float(np.abs(r).max()) if r.size else 0.0


def balance_violation(game, x):
    xs = game.split(x)
    return max(float(np.abs(C @ xi - d).max())
               for C, d, xi in zip(game.C_blocks, game.d_blocks, xs))


def barrier_quantities(lay, x):
    """All ``x_mg`` and ``x_dg`` entries of a stacked decision."""
    out, o = [], 0
    for i in range(lay.N):
        X = x[o:o + lay.dims[i]].reshape(lay.T, lay.width(i))
        out.append(X[:, :2].ravel())
        o += lay.dims[i]
    return np.concatenate(out)


def synthetic_specs(N=6, T=96, seed=0, c_mg=0.1, c_dg=0.3, c_tr=0.05, kappa_tr=0.1,
                    gamma=1e3):
    """Seeded daily profiles: a phase-shifted sinusoid plus small noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    specs = []
    for _ in range(N):
        base, amp, phase = rng.uniform(2.0, 4.0), rng.uniform(0.5, 1.5), rng.uniform(0, 2 * np.pi)
        demand = base + amp * np.sin(2 * np.pi * t / T + phase) + 0.05 * rng.standard_normal(T)
        rbase, ramp, rphase = rng.uniform(0.5, 1.5), rng.uniform(0.2, 0.6), rng.uniform(0, 2 * np.pi)
        ref = rbase + ramp * np.sin(2 * np.pi * t / T + rphase) + 0.05 * rng.standard_normal(T)
        specs.append(ProsumerSpec(demand, ref, c_mg, c_dg, c_tr, kappa_tr, gamma))
    return specs


def trading_graph(N, seed, p=0.5):
    """Random undirected trading graph (isolated prosumers are allowed)."""
    return random_graph(N, p, seed, connected=False)


def initial_decision(lay, specs, seed=0, trade_scale=0.5):
    """Positive grid/generation start with random (non-reciprocal) trades."""
    rng = np.random.default_rng(seed)
    parts = []
    for i in range(lay.N):
        X = np.zeros((lay.T, lay.width(i)))
        X[:, 0] = 1.0
        X[:, 1] = 1.0
        X[:, 2:] = trade_scale * rng.standard_normal((lay.T, lay.width(i) - 2))
        parts.append(X.ravel())
    return np.concatenate(parts)
