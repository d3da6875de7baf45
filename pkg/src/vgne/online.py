"""Tracking the equilibrium of a game whose costs and offsets drift over time.

Two schemes are provided.  The full-information one warm-starts ``K``
primal-dual steps at the previous output.  The distributed one re-initialises
the tracking estimates so that their network means stay exact after the game
changes, then runs ``K`` distributed rounds.

Time starts at ``t = 1``; ``t = 0`` denotes the cold start, where the
distributed tracker uses ``phi^0 = 0`` and ``b^0 = 0``.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .distributed import AgentState, NetworkState, distributed_round, _split_input, _split_rows
from .exceptions import ContractViolation, DivergenceError
from .full import SolverConfig, solve
from .game import PrimalDualPoint, _dense, _ball
from .metric import kkt_apply


@dataclass(frozen=True, eq=False)
class GameSequence:
    """Indexed family of games sharing the constraint matrix.

    Parameters
    ----------
    instance : callable
        ``instance(t)`` returns the ``Game`` acquired at time ``t >= 1``.
    K : int
        Inner iterations per time step.
    delta, delta_phi : float, optional
        Declared bounds on solution drift and aggregation drift.
    """

    instance: object
    K: int = 1
    delta: float = None
    delta_phi: float = None

    def __call__(self, t):
        return self.instance(t)

    def check_fixed_matrix(self, ts):
        """Raise if the stacked constraint matrix differs between the given times."""
        prints = {_fingerprint(self.instance(t)) for t in ts}
        if len(prints) > 1:
            raise ContractViolation("constraint matrix varies over time")


def _fingerprint(game):
    A = np.ascontiguousarray(_dense(game.A_kkt))
    return hashlib.sha256(A.tobytes() + str(A.shape).encode()).hexdigest()


# -- full information ---------------------------------------------------------


def online_full_step(seq, t, w_prev, alpha, K):
    """``K`` forward steps on the time-``t`` KKT operator, warm-started at ``w_prev``."""
    if int(K) != K or K < 1:
        raise ContractViolation("K must be a positive integer")
    game = seq(t)
    y = w_prev.omega if isinstance(w_prev, PrimalDualPoint) else np.array(w_prev, dtype=float)
    for k in range(int(K)):
        with np.errstate(over="ignore", invalid="ignore"):
            y = y - alpha * kkt_apply(game, y)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"divergence at t={t}, k={k}", t=t, k=k)
    return PrimalDualPoint.from_omega(game, y)


def run_online_full(seq, horizon, w0, alpha, K, met=None, solutions=None):
    """Run ``t = 1..horizon``; returns the outputs and, with references, errors.

    ``solutions[t-1]`` is ``omega*_t``.  Errors are measured in ``met``'s
    ``P``-norm.
    """
    w = w0.omega if isinstance(w0, PrimalDualPoint) else np.asarray(w0, dtype=float)
    outputs, errors = [], []
    for t in range(1, horizon + 1):
        w = online_full_step(seq, t, w, alpha, K).omega
        outputs.append(w)
        if solutions is not None and met is not None:
            errors.append(met.norm(w - solutions[t - 1]))
    return outputs, errors


def tracking_bound_full(met, rho, K, delta):
    """Asymptotic tracking radius ``rho^{K/2} / (1 - rho^{K/2}) delta sqrt(lambda_max(P))``."""
    if not rho < 1 or K < 1:
        raise ContractViolation("need rho < 1 and K >= 1")
    c = rho ** (K / 2.0)
    return c / (1.0 - c) * delta * np.sqrt(met.lambda_max)


# -- distributed ----------------------------------------------------------------


def online_distributed_init(game, x0, z0=None, mu0=None):
    """Cold start: ``sigma_i = 0``, ``lam_i = z_i``, ``r_i = A_i x_i``."""
    xs = _split_input(game, x0, game.dims)
    zs = _split_rows(z0, game.N, game.m)
    mus = _split_input(game, mu0, game.local_dims, local=True)
    agents = tuple(
        AgentState(x=xs[i], sigma=np.zeros(game.q), lam=zs[i].copy(),
                   r=game.A_blocks[i] @ xs[i], z=zs[i], mu=mus[i])
        for i in range(game.N)
    )
    return NetworkState(agents, 0)


def _previous(seq, t):
    return seq(t - 1) if t > 1 else None


def reinitialize(prev_game, game, state):
    """Shift the tracking estimates onto the new game's ``phi`` and ``b``.

    ``sigma_i += phi_i^t(x_i) - phi_i^{t-1}(x_i)`` and
    ``r_i -= b_i^t - b_i^{t-1}``; everything else is carried over.
    """
    agents = []
    for i, a in enumerate(state.agents):
        phi_old = np.zeros(game.q) if prev_game is None else prev_game.phi[i](a.x)
        b_old = np.zeros(game.m) if prev_game is None else prev_game.b_blocks[i]
        sigma = a.sigma - phi_old + game.phi[i](a.x)
        r = a.r - (game.b_blocks[i] - b_old)
        agents.append(AgentState(a.x, sigma, a.lam, r, a.z, a.mu))
    return NetworkState(tuple(agents), state.k)


def reinit_perturbation(prev_game, game, state):
    """Norm of the jump the re-initialisation adds to the tracking estimates."""
    parts = []
    for i, a in enumerate(state.agents):
        parts.append(game.phi[i](a.x) - prev_game.phi[i](a.x))
    for i in range(game.N):
        parts.append(game.b_blocks[i] - prev_game.b_blocks[i])
    return float(np.linalg.norm(np.concatenate(parts)))


def online_distributed_step(seq, t, graph, s_prev, alpha, K):
    """Re-initialise for time ``t`` and run ``K`` distributed rounds."""
    if int(K) != K or K < 1:
        raise ContractViolation("K must be a positive integer")
    game = seq(t)
    state = reinitialize(_previous(seq, t), game, s_prev)
    for _ in range(int(K)):
        try:
            state = distributed_round(game, graph, state, alpha)
        except DivergenceError as exc:
            raise DivergenceError(f"{exc} (t={t})", agent=exc.agent, t=t, k=exc.k) from exc
    return state


def tracking_errors(met, state, xi_star):
    """``(||xi - xi*||_P, ||(xi - xi*, chi)||_Q)`` with ``Q = diag(P/2, I)``."""
    e = state.xi() - np.asarray(xi_star, dtype=float)
    chi = state.chi()
    p2 = met.norm_sq(e)
    return float(np.sqrt(max(p2, 0.0))), float(np.sqrt(max(0.5 * p2 + chi @ chi, 0.0)))


def tracking_bound_distributed(met, eta, K, delta, delta_phi, N, ell_A):
    """``eta^{K/2}/(1-eta^{K/2}) sqrt(lambda_max(Q)) ((1 + N ell_A) delta + delta_phi)``."""
    if not eta < 1 or K < 1:
        raise ContractViolation("need eta < 1 and K >= 1")
    c = eta ** (K / 2.0)
    return c / (1.0 - c) * np.sqrt(met.q_lambda_max) * ((1 + N * ell_A) * delta + delta_phi)


# -- drift measurement -----------------------------------------------------------


def kkt_root(game, w_prev=None, tol=1e-10):
    """Equilibrium of ``game`` as a root of the KKT operator (MINPACK hybrid).

    A reference oracle for drift measurement; much faster than the
    first-order iteration on small, smooth problems.
    """
    w0 = np.zeros(game.n + game.n_dual) if w_prev is None else np.asarray(w_prev, float)
    sol = scipy.optimize.root(lambda w: kkt_apply(game, w), w0, method="hybr",
                              options={"xtol": 1e-14})
    res = float(np.linalg.norm(kkt_apply(game, sol.x)))
    if not res <= tol:
        raise RuntimeError(f"KKT root solve failed (residual {res:.3g})")
    return sol.x


def reference_solutions(seq, horizon, met, alpha=None, tol=1e-10, max_iter=1_000_000,
                        solver=None):
    """``omega*_t`` for ``t = 1..horizon``.

    By default each game is solved by the full-information iteration, warm
    started at the previous solution.  ``solver(game, w_prev)`` replaces it.
    """
    sols = []
    w = None
    for t in range(1, horizon + 1):
        game = seq(t)
        if solver is not None:
            w = np.asarray(solver(game, w), dtype=float)
        else:
            cfg = SolverConfig(alpha=alpha, tol=tol, max_iter=max_iter, record_trace=False,
                               validate=alpha is None)
            out = solve(game, met, cfg, w0=w)
            if not out.converged:
                raise RuntimeError(f"reference solve failed at t={t} "
                                   f"(residual {out.residual:.3g})")
            w = out.point.omega
        sols.append(w)
    return sols


def measure_drift(seq, horizon, tol=1e-10, met=None, alpha=None, solutions=None,
                  probe_points=None, seed=0, solver=None):
    """Measured ``(delta, delta_phi)`` over ``t = 1..horizon``.

    ``delta`` is the largest jump between consecutive solutions;
    ``delta_phi`` the largest change of the stacked aggregation maps over the
    probe points (a seeded sample around the origin when not given).
    """
    if solutions is None:
        solutions = reference_solutions(seq, horizon, met, alpha=alpha, tol=tol,
                                        solver=solver)
    delta = 0.0
    for a, b in zip(solutions[:-1], solutions[1:horizon]):
        delta = max(delta, float(np.linalg.norm(b - a)))
    g1 = seq(1)
    if probe_points is None:
        rng = np.random.default_rng(seed)
        probe_points = np.vstack([np.zeros(g1.n), _ball(rng, 16, g1.n, 10.0)])
    delta_phi = 0.0
    prev = g1
    for t in range(2, horizon + 1):
        cur = seq(t)
        for x in probe_points:
            xs = prev.split(np.asarray(x, dtype=float))
            diff = np.concatenate([prev.phi[i](xs[i]) - cur.phi[i](xs[i])
                                   for i in range(prev.N)])
            delta_phi = max(delta_phi, float(np.linalg.norm(diff)))
        prev = cur
    return delta, delta_phi
