"""KKT operator, the weighted metric that makes it strongly monotone, and rates.

With ``omega = col(x, lam)`` the KKT operator is

    A(omega) = col(F(x) + A^T lam, -A x + b)

and the metric is ``P = [[I, nu A^T], [nu A, I]]``.  ``P`` is never formed
densely by the solvers; products go through ``A`` only.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    ContractViolation,
    DegenerateGame,
    InadmissibleStep,
    MetricConstructionError,
)
from .game import PrimalDualPoint, _dense, dual_action, kkt_residual, pseudo_gradient


def nu_upper_bound(c):
    """Largest coupling weight for which the 2x2 monotonicity bound stays positive."""
    return 4.0 * c.mu_F * c.mu_A / (c.ell_F ** 2 * c.ell_A ** 2 + 4.0 * c.mu_A * c.ell_A ** 2)


@dataclass(frozen=True, eq=False)
class Metric:
    """Weighted inner product ``<u, v>_P`` and the rate constants measured in it.

    Attributes
    ----------
    nu : float
        Off-diagonal weight of ``P``.
    mu_op, ell_op : float
        Strong monotonicity and Lipschitz moduli of the KKT operator in the
        ``P``-norm.
    norm_A : float
        Spectral norm of the constraint matrix; fixes the spectrum of ``P``.
    """

    nu: float
    mu_op: float
    ell_op: float
    norm_A: float
    A: object
    n: int
    n_dual: int

    @property
    def lambda_min(self):
        return 1.0 - self.nu * self.norm_A

    @property
    def lambda_max(self):
        return 1.0 + self.nu * self.norm_A

    @property
    def q_lambda_max(self):
        """Largest eigenvalue of ``Q = diag(P/2, I)``."""
        return max(self.lambda_max / 2.0, 1.0)

    @property
    def P(self):
        """Dense ``P``; only for small problems and tests."""
        A = _dense(self.A) if self.n_dual else np.zeros((0, self.n))
        return np.block([
            [np.eye(self.n), self.nu * A.T],
            [self.nu * A, np.eye(self.n_dual)],
        ])

    def apply(self, w):
        x, lam = w[:self.n], w[self.n:]
        if self.n_dual == 0:
            return x.copy()
        return np.concatenate([
            x + self.nu * (self.A.T @ lam),
            self.nu * (self.A @ x) + lam,
        ])

    def inner(self, u, v):
        return float(u @ self.apply(v))

    def norm_sq(self, w):
        x, lam = w[:self.n], w[self.n:]
        if self.n_dual == 0:
            return float(x @ x)
        return float(x @ x + 2.0 * self.nu * (lam @ (self.A @ x)) + lam @ lam)

    def norm(self, w):
        return float(np.sqrt(max(self.norm_sq(w), 0.0)))


def build_metric(game, c, safety=0.5):
    """Pick ``nu`` and compute the operator moduli in the resulting metric.

    ``nu = safety * min(nu_upper_bound(c), 1/ell_A)``.  The monotonicity
    modulus is the smallest eigenvalue of

        G = [[mu_F - nu ell_A^2, -nu ell_F ell_A / 2],
             [-nu ell_F ell_A / 2, nu mu_A]]

    divided by ``lambda_max(P)``; the Lipschitz modulus is
    ``(ell_F + ell_A) sqrt(lambda_max(P) / lambda_min(P))``.
    """
    if not 0 < safety < 1:
        raise ContractViolation("safety must lie in (0, 1)")
    c.check(game)
    _, norm_A = game.constraint_spectrum
    if game.n_dual == 0:
        return Metric(0.0, c.mu_F, c.ell_F, 0.0, game.A_kkt, game.n, 0)
    nu, mu_op, ell_op = _moduli(c, norm_A, safety)
    return Metric(nu, mu_op, ell_op, norm_A, game.A_kkt, game.n, game.n_dual)


def _moduli(c, norm_A, safety):
    nu = safety * min(nu_upper_bound(c), 1.0 / c.ell_A)
    off = -nu * c.ell_F * c.ell_A / 2.0
    G = np.array([[c.mu_F - nu * c.ell_A ** 2, off], [off, nu * c.mu_A]])
    g_min = np.linalg.eigvalsh(G)[0]
    if g_min <= 0:
        raise MetricConstructionError("metric construction failed; shrink safety")
    lmin, lmax = 1.0 - nu * norm_A, 1.0 + nu * norm_A
    if lmin <= 0:
        raise MetricConstructionError("P is not positive definite")
    mu_op = g_min / lmax
    ell_op = (c.ell_F + c.ell_A) * np.sqrt(lmax / lmin)
    return float(nu), float(mu_op), float(ell_op)


def window_from_constants(c, safety=0.5):
    """Admissible step interval implied by declared constants alone.

    ``ell_A`` stands in for ``||A||``; useful before any game is built.
    """
    c.check()
    if c.ell_A == 0:
        return 0.0, 2.0 * c.mu_F / c.ell_F ** 2
    _, mu_op, ell_op = _moduli(c, c.ell_A, safety)
    return 0.0, 2.0 * mu_op / ell_op ** 2


def kkt_apply(game, w):
    """``col(F(x) + A^T lam, -A x + b)`` for a flat ``w`` or a ``PrimalDualPoint``."""
    if isinstance(w, PrimalDualPoint):
        w = w.omega
    w = np.asarray(w, dtype=float)
    if w.shape != (game.n + game.n_dual,):
        raise ContractViolation(f"omega has shape {w.shape}")
    x, lam = w[:game.n], w[game.n:]
    F = pseudo_gradient(game, x)
    if game.n_dual == 0:
        return F
    top = F + np.concatenate([dual_action(game, i, lam) for i in range(game.N)])
    return np.concatenate([top, -kkt_residual(game, x)])


def solve_affine_kkt(M, c_vec, A, b):
    """Direct solve of the KKT system of the affine game ``F(x) = M x + c_vec``.

    Returns the unique ``PrimalDualPoint`` with ``M x + c_vec + A^T lam = 0`` and
    ``A x = b``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    c_vec = np.atleast_1d(np.asarray(c_vec, dtype=float))
    A = _dense(A).reshape(-1, M.shape[0]) if np.size(A) else np.zeros((0, M.shape[0]))
    b = np.atleast_1d(np.asarray(b, dtype=float)).reshape(A.shape[0])
    n, m = M.shape[0], A.shape[0]
    K = np.block([[M, A.T], [-A, np.zeros((m, m))]])
    rhs = np.concatenate([-c_vec, -b])
    try:
        with warnings.catch_warnings():
            # singularity is checked on the pivots below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(K, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise DegenerateGame(str(exc)) from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= 1e-14 * max(diag.max(), 1.0):
        raise DegenerateGame("degenerate affine game: singular KKT matrix")
    w = scipy.linalg.lu_solve(lu, rhs)
    return PrimalDualPoint(w[:n], w[n:])


def admissible_window(met):
    """Open interval of step sizes with a contraction guarantee."""
    return 0.0, 2.0 * met.mu_op / met.ell_op ** 2


def default_step(met):
    """Vertex of the rate parabola, ``mu_op / ell_op**2``."""
    return met.mu_op / met.ell_op ** 2


def contraction_factor(met, alpha):
    """``rho = 1 - 2 alpha mu_op + alpha**2 ell_op**2``."""
    lo, hi = admissible_window(met)
    if not lo < alpha < hi:
        raise InadmissibleStep(alpha, (lo, hi))
    rho = 1.0 - 2.0 * alpha * met.mu_op + alpha ** 2 * met.ell_op ** 2
    assert rho < 1.0
    return rho
