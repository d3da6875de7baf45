"""Seeded affine aggregative games with exactly computable constants.

Agent ``i`` minimises

    J_i(x_i, s) = 1/2 x_i^T H_i x_i + x_i^T B_i s + c_i^T x_i,    s = sigma(x),

with linear aggregation ``phi_i(x_i) = Phi_i x_i + e_i``.  The pseudo-gradient
is affine, so the equilibrium is a linear solve and the monotonicity
constants are eigenvalues.
"""

from dataclasses import dataclass, replace

import numpy as np

from .game import Game, GameConstants, affine_part
from .metric import solve_affine_kkt
from .online import GameSequence


@dataclass(frozen=True)
class AffineData:
    H: tuple
    B: tuple
    Phi: tuple
    c: tuple
    A: tuple
    b: tuple
    e: tuple = None


def _agent_oracles(H, B, Phi, c, e):
    def grad_local(x, s):
        return H @ x + B @ s + c

    def grad_agg(x, s):
        return B.T @ x

    def phi(x):
        return Phi @ x + e

    def dphi(x):
        return Phi

    return grad_local, grad_agg, phi, dphi


def affine_game(data, name="affine"):
    N = len(data.H)
    q = data.Phi[0].shape[0]
    e = data.e if data.e is not None else tuple(np.zeros(q) for _ in range(N))
    oracles = [_agent_oracles(data.H[i], data.B[i], data.Phi[i], data.c[i], e[i])
               for i in range(N)]
    return Game(
        dims=tuple(h.shape[0] for h in data.H),
        q=q,
        grad_local=tuple(o[0] for o in oracles),
        grad_agg=tuple(o[1] for o in oracles),
        phi=tuple(o[2] for o in oracles),
        dphi=tuple(o[3] for o in oracles),
        A_blocks=tuple(data.A),
        b_blocks=tuple(data.b),
        name=name,
    )


def random_affine_data(N=6, n_i=2, m=2, q=2, seed=0, coupling=0.3):
    """Random well-posed data; ``coupling`` scales the aggregate interaction."""
    rng = np.random.default_rng(seed)
    dims = [n_i] * N if np.isscalar(n_i) else list(n_i)
    H, B, Phi, c, A, b = [], [], [], [], [], []
    for d in dims:
        H.append(np.diag(rng.uniform(1.0, 2.0, d)))
        B.append(coupling * rng.standard_normal((d, q)) / np.sqrt(q))
        Phi.append(rng.standard_normal((q, d)) / np.sqrt(d))
        c.append(rng.standard_normal(d))
        A.append(rng.standard_normal((m, d)) / np.sqrt(sum(dims) / m))
        b.append(rng.standard_normal(m) / N)
    return AffineData(tuple(H), tuple(B), tuple(Phi), tuple(c), tuple(A), tuple(b))


def exact_constants(game):
    """Constants of an affine game from eigenvalues and singular values."""
    M, _ = affine_part(game)
    mu_F = float(np.linalg.eigvalsh((M + M.T) / 2)[0])
    ell_F = float(np.linalg.norm(M, 2))
    mu_A, ell_A = game.constraint_spectrum
    ell_sigma = max(float(np.linalg.norm(game.dphi[i](np.zeros(d)), 2))
                    for i, d in enumerate(game.dims))
    return GameConstants(mu_F, ell_F, mu_A, ell_A, ell_sigma)


def random_affine_game(N=6, n_i=2, m=2, q=2, seed=0, coupling=0.3):
    """Game plus its exact constants; rejects draws that are not monotone
    or not full rank."""
    for attempt in range(100):
        data = random_affine_data(N, n_i, m, q, seed + 7919 * attempt, coupling)
        game = affine_game(data, name=f"affine-{seed}")
        c = exact_constants(game)
        if c.mu_F > 0.1 and (game.m == 0 or c.mu_A > 1e-3):
            return game, c
    raise RuntimeError("could not draw a well-posed affine game")


def affine_solution(game):
    """Exact ``omega*`` of an affine game, via the direct KKT solve."""
    M, c = affine_part(game)
    sol = solve_affine_kkt(M, c, game.A_kkt, game.b_kkt)
    return sol.omega


def drifting_sequence(data, b_rate=0.01, phi_amp=0.0, phi_period=20.0, seed=0, K=1):
    """Affine game whose offsets drift: ``b_i^t = b_i + b_rate t u`` and
    ``e_i^t = phi_amp sin(t / phi_period) v_i``.

    ``u`` is one shared unit vector, so all offset increments are aligned.
    """
    rng = np.random.default_rng(seed)
    N = len(data.H)
    m = data.A[0].shape[0]
    q = data.Phi[0].shape[0]
    u = rng.standard_normal(m)
    u /= np.linalg.norm(u) or 1.0
    v = [rng.standard_normal(q) / np.sqrt(q) for _ in range(N)]

    def instance(t):
        b_t = tuple(data.b[i] + b_rate * t * u for i in range(N))
        e_t = tuple(phi_amp * np.sin(t / phi_period) * v[i] for i in range(N))
        return affine_game(replace(data, b=b_t, e=e_t), name=f"drift-{t}")

    return GameSequence(instance, K=K)
