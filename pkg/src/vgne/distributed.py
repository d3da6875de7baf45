"""Fully-distributed equilibrium seeking with consensus-based tracking.

Each agent keeps estimates of the aggregate (``sigma``), of the coupling
multiplier (``lam``) and of the constraint residual (``r``), plus an
auxiliary multiplier ``z``.  Estimates are mixed with neighbours through a
doubly stochastic ``W`` and corrected by the agent's own increments, so that
network averages track the true quantities exactly.

For analysis the network state is mapped to

    xi  = (x, mean(lam), mu)           (mu: private multipliers)
    chi = (sigma~, r~, lam~)           (deviations from the network means)

in which the round is a perturbed copy of the full-information step.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ContractViolation, DivergenceError, NoStableStep
from .full import SolverConfig, solve
from .game import aggregate, extended_block, pseudo_gradient
from .metric import default_step, kkt_apply
from .traces import ROUND_HEADER, write_csv


@dataclass(frozen=True)
class AgentState:
    x: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    r: np.ndarray
    z: np.ndarray
    mu: np.ndarray


def _fsum_mean(rows):
    rows = np.asarray(rows, dtype=float)
    N = rows.shape[0]
    return np.array([math.fsum(col) for col in rows.T]) / N


@dataclass(frozen=True)
class NetworkState:
    """Snapshot of every agent after ``k`` rounds."""

    agents: tuple
    k: int = 0

    @property
    def N(self):
        return len(self.agents)

    @property
    def x(self):
        return np.concatenate([a.x for a in self.agents])

    @property
    def z(self):
        return np.stack([a.z for a in self.agents])

    @property
    def mu(self):
        return np.concatenate([a.mu for a in self.agents])

    def stacked(self, name):
        """``N x dim`` array of one estimate (``'sigma'``, ``'lam'`` or ``'r'``)."""
        return np.stack([getattr(a, name) for a in self.agents])

    def mean(self, name):
        return _fsum_mean(self.stacked(name))

    def deviation(self, name):
        S = self.stacked(name)
        return S - _fsum_mean(S)

    def xi(self):
        return np.concatenate([self.x, self.mean("lam"), self.mu])

    def chi(self):
        return np.concatenate([self.deviation(n).ravel() for n in ("sigma", "r", "lam")])


def distributed_init(game, x0, z0=None, mu0=None):
    """``sigma_i = phi_i(x_i)``, ``lam_i = z_i``, ``r_i = A_i x_i - b_i``."""
    xs = _split_input(game, x0, game.dims)
    zs = _split_rows(z0, game.N, game.m)
    mus = _split_input(game, mu0, game.local_dims, local=True)
    agents = []
    for i in range(game.N):
        agents.append(AgentState(
            x=xs[i],
            sigma=np.asarray(game.phi[i](xs[i]), dtype=float),
            lam=zs[i].copy(),
            r=game.A_blocks[i] @ xs[i] - game.b_blocks[i],
            z=zs[i],
            mu=mus[i],
        ))
    return NetworkState(tuple(agents), 0)


def _split_input(game, v, dims, local=False):
    if v is None:
        return [np.zeros(d) for d in dims]
    if isinstance(v, (list, tuple)):
        return [np.asarray(vi, dtype=float).copy() for vi in v]
    v = np.asarray(v, dtype=float)
    parts = game.split_local(v) if local else game.split(v)
    return [p.copy() for p in parts]


def _split_rows(v, N, m):
    if v is None:
        return [np.zeros(m) for _ in range(N)]
    v = np.asarray(v, dtype=float).reshape(N, m)
    return [row.copy() for row in v]


# -- one synchronous round ---------------------------------------------------


def local_update(game, i, agent, alpha):
    """Primal step and multiplier bookkeeping from agent ``i``'s own state."""
    g = extended_block(game, i, agent.x, agent.sigma) + game.A_blocks_T[i] @ agent.lam
    mu_next = agent.mu
    if game.local_dims[i]:
        g = g + game.C_blocks_T[i] @ agent.mu
        mu_next = agent.mu + alpha * (game.C_blocks[i] @ agent.x - game.d_blocks[i])
    x_next = agent.x - alpha * g
    z_next = agent.z + alpha * game.N * agent.r
    return x_next, z_next, mu_next


def tracking_update(game, i, agent, x_next, z_next, mu_next, inbox):
    """Mix neighbours' pre-round estimates and add agent ``i``'s increments.

    ``inbox`` is a list of ``(w_ij, neighbour_state)`` in ascending ``j``.
    """
    sigma = sum(w * nb.sigma for w, nb in inbox)
    r = sum(w * nb.r for w, nb in inbox)
    lam = sum(w * nb.lam for w, nb in inbox)
    sigma = sigma + game.phi[i](x_next) - game.phi[i](agent.x)
    r = r + game.A_blocks[i] @ x_next - game.A_blocks[i] @ agent.x
    lam = lam + z_next - agent.z
    return AgentState(x_next, sigma, lam, r, z_next, mu_next)


def distributed_round(game, graph, state, alpha):
    """One synchronous round; every read of a neighbour uses its pre-round state.

    ``graph`` is a ``CommGraph`` or a ``GraphSchedule`` (queried at round
    ``state.k``).
    """
    g = graph.graph_at(state.k)
    W = g.W
    new = []
    for i in range(game.N):
        agent = state.agents[i]
        with np.errstate(over="ignore", invalid="ignore"):
            x_next, z_next, mu_next = local_update(game, i, agent, alpha)
        if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(z_next))):
            raise DivergenceError(f"divergence at agent {i}, round {state.k}",
                                  agent=i, k=state.k)
        inbox = [(W[i, j], state.agents[j]) for j in g.in_neighbors[i]]
        new.append(tracking_update(game, i, agent, x_next, z_next, mu_next, inbox))
    return NetworkState(tuple(new), state.k + 1)


# -- verification -----------------------------------------------------------


@dataclass(frozen=True)
class InvarianceReport:
    """Deviations of the network means from the quantities they track."""

    lam: float
    r: float
    sigma: float

    def max(self):
        return max(self.lam, self.r, self.sigma)


def invariance_check(game, state, b_blocks=None):
    """Compare ``mean(lam)``, ``mean(r)``, ``mean(sigma)`` with their targets.

    ``b_blocks`` overrides the game's offsets (used by the online tracker,
    whose offsets change between time steps).
    """
    b_blocks = game.b_blocks if b_blocks is None else b_blocks
    z_mean = _fsum_mean(state.z)
    res = _fsum_mean([game.A_blocks[i] @ a.x - b_blocks[i]
                      for i, a in enumerate(state.agents)])
    phis = _fsum_mean([game.phi[i](a.x) for i, a in enumerate(state.agents)])
    return InvarianceReport(
        lam=float(np.linalg.norm(state.mean("lam") - z_mean)),
        r=float(np.linalg.norm(state.mean("r") - res)),
        sigma=float(np.linalg.norm(state.mean("sigma") - phis)),
    )


def split_chi(game, chi):
    N, q, m = game.N, game.q, game.m
    a, b = N * q, N * q + N * m
    return chi[:a].reshape(N, q), chi[a:b].reshape(N, m), chi[b:].reshape(N, m)


def _deviate(S):
    return S - S.mean(axis=0)


def compact_step(game, graph, xi, chi, alpha, k=0, atol=1e-8):
    """The round written in ``(xi, chi)`` coordinates.

    ``xi' = xi - alpha A(xi) - [alpha (F(x, sigma) - F(x) + A^T lam~); 0]`` and
    ``chi' = W chi + (Pi~ dphi, Pi~ A dx, alpha N r~)``, with the aggregate
    estimates reconstructed as ``sigma~ + sigma(x)``.
    """
    xi = np.asarray(xi, dtype=float)
    chi = np.asarray(chi, dtype=float)
    n = game.n
    s_dev, r_dev, l_dev = split_chi(game, chi)
    for name, S in (("sigma", s_dev), ("r", r_dev), ("lam", l_dev)):
        if S.size and np.abs(S.sum(axis=0)).max() > atol * (1 + np.abs(S).max()):
            raise ContractViolation(f"chi block '{name}' does not have zero mean")
    x = xi[:n]
    xs = game.split(x)
    s_true = aggregate(game, x)
    F_ext = np.concatenate([extended_block(game, i, xi_, s_true + s_dev[i])
                            for i, xi_ in enumerate(xs)])
    F = pseudo_gradient(game, x)
    AT_dev = np.concatenate([game.A_blocks_T[i] @ l_dev[i] for i in range(game.N)])
    xi_next = xi - alpha * kkt_apply(game, xi)
    xi_next[:n] -= alpha * (F_ext - F + AT_dev)
    xs_next = game.split(xi_next[:n])
    dphi = np.stack([game.phi[i](xs_next[i]) - game.phi[i](xs[i]) for i in range(game.N)])
    dAx = np.stack([game.A_blocks[i] @ (xs_next[i] - xs[i]) for i in range(game.N)])
    W = graph.weights(k)
    chi_next = np.concatenate([
        (W @ s_dev + _deviate(dphi)).ravel(),
        (W @ r_dev + _deviate(dAx)).ravel(),
        (W @ l_dev + alpha * game.N * r_dev).ravel(),
    ])
    return xi_next, chi_next


def lyapunov(met, xi, chi, xi_star):
    """``V = 1/2 ||xi - xi*||_P^2 + ||chi||^2``."""
    chi = np.asarray(chi, dtype=float)
    return 0.5 * met.norm_sq(np.asarray(xi) - np.asarray(xi_star)) + float(chi @ chi)


def reference_xi(game, met, alpha=None, tol=1e-12, max_iter=1_000_000, w0=None):
    """High-accuracy full-information solution used as ``xi*``."""
    cfg = SolverConfig(alpha=alpha, tol=tol, max_iter=max_iter, record_trace=False,
                       validate=alpha is None)
    out = solve(game, met, cfg, w0=w0)
    if not out.converged:
        raise RuntimeError(f"reference solve stalled at residual {out.residual:.3g}")
    return out.point.omega


def random_start(game, seed, center=None, scale=1.0):
    """Seeded initial network state around ``center`` (a full ``omega``)."""
    rng = np.random.default_rng(seed)
    c = np.zeros(game.n + game.n_dual) if center is None else np.asarray(center)
    x0 = c[:game.n] + scale * rng.standard_normal(game.n)
    lam_c = c[game.n:game.n + game.m]
    z0 = lam_c + scale * rng.standard_normal((game.N, game.m))
    mu0 = c[game.n + game.m:] + scale * rng.standard_normal(game.m_local)
    return distributed_init(game, x0, z0, mu0)


def run_rounds(game, graph, state, alpha, rounds, met=None, xi_star=None,
               record=True, tol=None, monitor=None):
    """Run rounds, optionally recording the round trace.

    Trace rows follow ``ROUND_HEADER``; ``V`` is ``None`` without ``xi_star``.
    Stops early once the KKT residual of ``xi`` drops to ``tol``.
    ``monitor(state)``, if given, sees every state including the first.
    """
    trace = []
    for it in range(rounds + 1):
        if monitor is not None:
            monitor(state)
        if record or tol is not None:
            xi = state.xi()
            with np.errstate(over="ignore", invalid="ignore"):
                kkt = float(np.linalg.norm(kkt_apply(game, xi)))
            if not np.isfinite(kkt):
                raise DivergenceError(f"KKT residual overflow at round {state.k}", k=state.k)
            if record:
                V = None
                if met is not None and xi_star is not None:
                    V = lyapunov(met, xi, state.chi(), xi_star)
                trace.append((state.k, V,
                              float(np.linalg.norm(state.deviation("sigma"))),
                              float(np.linalg.norm(state.deviation("lam"))),
                              float(np.linalg.norm(state.deviation("r"))),
                              kkt))
            if tol is not None and kkt <= tol:
                break
        if it == rounds:
            break
        state = distributed_round(game, graph, state, alpha)
    return state, trace


def write_round_trace(path, trace):
    return write_csv(path, ROUND_HEADER, trace)


def lyapunov_ratios(game, graph, met, alpha, xi_star, state, rounds):
    """Per-round ratios ``V^{k+1} / V^k`` along a trajectory."""
    V = [lyapunov(met, state.xi(), state.chi(), xi_star)]
    for _ in range(rounds):
        state = distributed_round(game, graph, state, alpha)
        V.append(lyapunov(met, state.xi(), state.chi(), xi_star))
    V = np.array(V)
    return V[1:] / V[:-1], V


def tune_alpha(game, met, graph, probe_horizon=50, seed=0, alpha0=None,
               xi_star=None, scale=1.0, min_alpha=1e-12):
    """Halve the step until ``V`` is non-increasing over the probe horizon.

    Starts at ``alpha0`` (the full-information default when omitted) from a
    seeded random network state around ``xi_star``.
    """
    if probe_horizon < 10:
        raise ContractViolation("probe_horizon must be at least 10")
    if xi_star is None:
        xi_star = reference_xi(game, met)
    alpha = default_step(met) if alpha0 is None else float(alpha0)
    start = random_start(game, seed, center=xi_star, scale=scale)
    while alpha >= min_alpha:
        try:
            ratios, _ = lyapunov_ratios(game, graph, met, alpha, xi_star,
                                        replace(start), probe_horizon)
            if np.all(ratios <= 1.0):
                return alpha
        except (DivergenceError, FloatingPointError):
            pass
        alpha /= 2.0
    raise NoStableStep(f"no stable step found above {min_alpha:g}")


def measure_eta(game, graph, met, alpha, xi_star, seeds=(0, 1, 2), rounds=200,
                burn_in=10, scale=1.0):
    """Empirical contraction factor of ``V``: the largest per-round ratio after
    ``burn_in`` rounds, over trajectories started from several seeded states."""
    if rounds <= burn_in:
        raise ContractViolation("rounds must exceed burn_in")
    eta = 0.0
    for seed in seeds:
        start = random_start(game, seed, center=xi_star, scale=scale)
        ratios, V = lyapunov_ratios(game, graph, met, alpha, xi_star, start, rounds)
        # stop once V reaches rounding level; ratios there are noise
        live = V[:-1] > 1e-24 * max(V[0], 1.0)
        ratios = ratios[burn_in:][live[burn_in:]]
        if ratios.size:
            eta = max(eta, float(ratios.max()))
    return eta
