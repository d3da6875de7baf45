"""Full-information primal-dual iteration and its coordinator-based form."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DivergenceError, InadmissibleStep
from .game import PrimalDualPoint, dual_action, extended_block
from .metric import admissible_window, default_step, kkt_apply
from .traces import FULL_HEADER, write_csv


@dataclass
class SolverConfig:
    """Step size and stopping rule.

    ``alpha=None`` means the rate-optimal step ``mu_op / ell_op**2``.  With
    ``validate=True`` the step must lie inside the certified window; switch it
    off to run with an empirically chosen step.
    """

    alpha: float = None
    tol: float = 1e-10
    max_iter: int = 10_000
    record_trace: bool = True
    validate: bool = True

    def step_for(self, met):
        alpha = default_step(met) if self.alpha is None else float(self.alpha)
        if self.validate:
            lo, hi = admissible_window(met)
            if not lo < alpha < hi:
                raise InadmissibleStep(alpha, (lo, hi))
        return alpha


@dataclass
class SolveResult:
    point: PrimalDualPoint
    converged: bool
    iterations: int
    residual: float
    trace: list = field(default_factory=list)

    def write_trace(self, path):
        return write_csv(path, FULL_HEADER, self.trace)


def _as_omega(game, w):
    if isinstance(w, PrimalDualPoint):
        return w.omega
    if w is None:
        return np.zeros(game.n + game.n_dual)
    return np.asarray(w, dtype=float).copy()


def pd_step(game, point, alpha):
    """One forward step ``omega - alpha * A(omega)``; both blocks read ``omega^k``."""
    w = _as_omega(game, point)
    with np.errstate(over="ignore", invalid="ignore"):
        w_next = w - alpha * kkt_apply(game, w)
    if not np.all(np.isfinite(w_next)):
        raise DivergenceError("divergence detected: non-finite iterate")
    return PrimalDualPoint.from_omega(game, w_next)


def solve(game, met, cfg=None, w0=None, reference=None):
    """Iterate ``pd_step`` until ``||A(omega)|| <= tol`` or ``max_iter``.

    Parameters
    ----------
    game : Game
    met : Metric
        Used to pick/validate the step and to measure distances to ``reference``.
    cfg : SolverConfig, optional
    w0 : PrimalDualPoint or array, optional
        Initial point (origin by default).
    reference : PrimalDualPoint or array, optional
        If given, the trace also records ``||omega^k - reference||_P^2``.

    Returns
    -------
    SolveResult
        ``trace`` rows are ``(iter, residual, lyapunov)``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    alpha = cfg.step_for(met)
    w = _as_omega(game, w0)
    ref = None if reference is None else _as_omega(game, reference)
    with np.errstate(over="ignore", invalid="ignore"):
        return _iterate(game, met, cfg, alpha, w, ref)


def _iterate(game, met, cfg, alpha, w, ref):
    trace = []
    k = 0
    while True:
        a = kkt_apply(game, w)
        res = float(np.linalg.norm(a))
        if cfg.record_trace:
            lyap = None if ref is None else met.norm_sq(w - ref)
            trace.append((k, res, lyap))
        if res <= cfg.tol or k >= cfg.max_iter:
            break
        w = w - alpha * a
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"divergence detected at iteration {k}", k=k)
        k += 1
    return SolveResult(PrimalDualPoint.from_omega(game, w), res <= cfg.tol, k, res, trace)


# -- semi-decentralized message passing -------------------------------------


@dataclass
class CoordinatedState:
    """Agents hold ``x_i`` (and private multipliers); the coordinator holds
    the coupling multiplier and the aggregate."""

    x: list
    mu: list
    lam: np.ndarray
    sigma: np.ndarray

    @classmethod
    def from_point(cls, game, point):
        point = PrimalDualPoint.from_omega(game, _as_omega(game, point))
        xs = [xi.copy() for xi in game.split(point.x)]
        total = np.zeros(game.q)
        for i, xi in enumerate(xs):
            total = total + game.phi[i](xi)
        mu = [m.copy() for m in game.split_local(point.lam[game.m:])]
        return cls(xs, mu, point.lam[:game.m].copy(), total / game.N)

    def to_point(self):
        return PrimalDualPoint(np.concatenate(self.x),
                               np.concatenate([self.lam, *self.mu]))


def agent_update(game, i, x_i, mu_i, lam, sigma, alpha):
    """Agent ``i``'s step from its own data and the broadcast ``(lam, sigma)``.

    Returns ``(x_i_next, mu_i_next, phi_i(x_i_next), A_i x_i - b_i)``.
    """
    full_lam = lam
    if game.local_dims[i]:
        # only block i of the private multipliers is read by dual_action
        pad = np.zeros(game.m_local)
        o = game.local_offsets
        pad[o[i]:o[i + 1]] = mu_i
        full_lam = np.concatenate([lam, pad])
    g = extended_block(game, i, x_i, sigma) + dual_action(game, i, full_lam)
    x_next = x_i - alpha * g
    mu_next = mu_i
    if game.local_dims[i]:
        mu_next = mu_i - alpha * -(game.C_blocks[i] @ x_i - game.d_blocks[i])
    report = game.A_blocks[i] @ x_i - game.b_blocks[i]
    return x_next, mu_next, game.phi[i](x_next), report


def semidecentralized_round(game, state, alpha):
    """One round: every agent steps locally, then the coordinator reduces.

    The coordinator sums the agents' reports in ascending agent order, which
    reproduces ``pd_step`` bit for bit.
    """
    x_new, mu_new, phis, reports = [], [], [], []
    for i in range(game.N):
        xi, mi, ph, rep = agent_update(game, i, state.x[i], state.mu[i],
                                       state.lam, state.sigma, alpha)
        x_new.append(xi)
        mu_new.append(mi)
        phis.append(ph)
        reports.append(rep)
    total_res = np.zeros(game.m)
    for rep in reports:
        total_res = total_res + rep
    lam = state.lam - alpha * -total_res
    total_phi = np.zeros(game.q)
    for ph in phis:
        total_phi = total_phi + ph
    return CoordinatedState(x_new, mu_new, lam, total_phi / game.N)
