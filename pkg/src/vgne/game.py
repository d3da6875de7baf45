"""Aggregative games with affine equality coupling constraints.

A game is a bundle of per-agent oracles.  Agent ``i`` controls ``x_i`` in
``R^{n_i}`` and its cost depends on ``x_i`` and on the aggregate

    sigma(x) = (1/N) * sum_i phi_i(x_i).

The coupling constraint is ``A x = b`` with ``A = [A_1 ... A_N]`` and
``b = sum_i b_i``.  Optionally each agent also carries private rows
``C_i x_i = d_i`` whose multipliers never leave the agent; for the
full-information analysis these are simply stacked under ``A``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import ContractViolation, NotStronglyMonotone


def _nrows(M):
    return M.shape[0]


def _hstack(blocks):
    if any(sp.issparse(B) for B in blocks):
        return sp.hstack([sp.csr_array(B) for B in blocks], format="csr")
    return np.hstack(blocks)


def _vstack(blocks):
    if any(sp.issparse(B) for B in blocks):
        return sp.vstack([sp.csr_array(B) for B in blocks], format="csr")
    return np.vstack(blocks)


def _block_diag(blocks):
    if any(sp.issparse(B) for B in blocks):
        return sp.block_diag([sp.csr_array(B) for B in blocks], format="csr")
    rows = sum(B.shape[0] for B in blocks)
    cols = sum(B.shape[1] for B in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for B in blocks:
        out[r:r + B.shape[0], c:c + B.shape[1]] = B
        r += B.shape[0]
        c += B.shape[1]
    return out


def _transpose(M):
    return sp.csr_array(M.T) if sp.issparse(M) else np.ascontiguousarray(np.asarray(M).T)


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


@dataclass(frozen=True, eq=False)
class Game:
    """Static aggregative game.

    Parameters
    ----------
    dims : tuple of int
        Per-agent decision dimensions ``n_i``.
    q : int
        Dimension of the aggregate ``sigma``.
    grad_local : sequence of callables
        ``grad_local[i](x_i, s)`` is the partial gradient of ``J_i`` in its
        first argument, with the aggregate frozen at ``s``.
    grad_agg : sequence of callables
        ``grad_agg[i](x_i, s)`` is the partial gradient of ``J_i`` in ``s``.
    phi, dphi : sequences of callables
        Local aggregation maps and their ``q x n_i`` Jacobians.
    A_blocks, b_blocks : sequences of arrays
        Coupling constraint blocks (``m x n_i``) and local offsets (``m``).
        Blocks may be dense arrays or scipy sparse arrays.
    C_blocks, d_blocks : sequences of arrays, optional
        Private equality rows ``C_i x_i = d_i``.
    """

    dims: tuple
    q: int
    grad_local: tuple
    grad_agg: tuple
    phi: tuple
    dphi: tuple
    A_blocks: tuple
    b_blocks: tuple
    C_blocks: tuple = None
    d_blocks: tuple = None
    name: str = ""

    def __post_init__(self):
        N = len(self.dims)
        if N < 1:
            raise ContractViolation("a game needs at least one agent")
        for field in ("grad_local", "grad_agg", "phi", "dphi", "A_blocks", "b_blocks"):
            if len(getattr(self, field)) != N:
                raise ContractViolation(f"{field} must have one entry per agent")
        m = _nrows(self.A_blocks[0])
        for i, (Ai, bi) in enumerate(zip(self.A_blocks, self.b_blocks)):
            if Ai.shape != (m, self.dims[i]):
                raise ContractViolation(
                    f"A_{i} has shape {Ai.shape}, expected {(m, self.dims[i])}"
                )
            if np.shape(bi) != (m,):
                raise ContractViolation(f"b_{i} must have shape ({m},)")
        if (self.C_blocks is None) != (self.d_blocks is None):
            raise ContractViolation("C_blocks and d_blocks go together")
        if self.C_blocks is not None:
            for i, (Ci, di) in enumerate(zip(self.C_blocks, self.d_blocks)):
                if Ci.shape[1] != self.dims[i] or np.shape(di) != (Ci.shape[0],):
                    raise ContractViolation(f"local block {i} has inconsistent shape")

    # -- dimensions ---------------------------------------------------------

    @property
    def N(self):
        return len(self.dims)

    @cached_property
    def n(self):
        return int(sum(self.dims))

    @cached_property
    def m(self):
        """Number of coupling rows."""
        return _nrows(self.A_blocks[0])

    @cached_property
    def local_dims(self):
        if self.C_blocks is None:
            return (0,) * self.N
        return tuple(_nrows(C) for C in self.C_blocks)

    @cached_property
    def m_local(self):
        return int(sum(self.local_dims))

    @property
    def n_dual(self):
        """Size of the full multiplier vector (coupling rows, then private rows)."""
        return self.m + self.m_local

    @cached_property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.dims)]).astype(int)

    @cached_property
    def local_offsets(self):
        return np.concatenate([[0], np.cumsum(self.local_dims)]).astype(int)

    def split(self, x):
        """Views of the per-agent blocks of a stacked decision vector."""
        o = self.offsets
        return [x[o[i]:o[i + 1]] for i in range(self.N)]

    def split_local(self, mu):
        o = self.local_offsets
        return [mu[o[i]:o[i + 1]] for i in range(self.N)]

    # -- stacked constraint data -------------------------------------------

    @cached_property
    def A(self):
        return _hstack(list(self.A_blocks))

    @cached_property
    def b(self):
        out = np.zeros(self.m)
        for bi in self.b_blocks:
            out = out + bi
        return out

    @cached_property
    def A_blocks_T(self):
        """Transposed coupling blocks, materialised once."""
        return tuple(_transpose(B) for B in self.A_blocks)

    @cached_property
    def C_blocks_T(self):
        if self.C_blocks is None:
            return ()
        return tuple(_transpose(B) for B in self.C_blocks)

    @cached_property
    def A_kkt(self):
        """Coupling rows stacked over the block-diagonal private rows."""
        if self.m_local == 0:
            return self.A
        C = _block_diag(list(self.C_blocks))
        if self.m == 0:
            return C
        return _vstack([self.A, C])

    @cached_property
    def b_kkt(self):
        if self.m_local == 0:
            return self.b
        return np.concatenate([self.b, *self.d_blocks])

    @cached_property
    def constraint_spectrum(self):
        """``(lambda_min(A A^T), ||A||)`` for the stacked KKT constraint matrix."""
        if self.n_dual == 0:
            return 0.0, 0.0
        A = self.A_kkt
        G = _dense(A @ A.T)
        ev = np.linalg.eigvalsh(G)
        return float(ev[0]), float(np.sqrt(max(ev[-1], 0.0)))

    @cached_property
    def coupling_norm(self):
        if self.m == 0:
            return 0.0
        G = _dense(self.A @ self.A.T)
        return float(np.sqrt(max(np.linalg.eigvalsh(G)[-1], 0.0)))


@dataclass(frozen=True)
class GameConstants:
    """Monotonicity, Lipschitz and rank constants of a game."""

    mu_F: float
    ell_F: float
    mu_A: float
    ell_A: float
    ell_sigma: float = 0.0

    def check(self, game=None, rtol=1e-9):
        """Raise ``ContractViolation`` if the constants are inconsistent."""
        if self.mu_F <= 0 or self.ell_F <= 0:
            raise ContractViolation("mu_F and ell_F must be positive")
        if self.mu_F > self.ell_F * (1 + rtol):
            raise ContractViolation("mu_F must not exceed ell_F")
        if self.mu_A > self.ell_A ** 2 * (1 + rtol):
            raise ContractViolation("mu_A must not exceed ell_A**2")
        if game is not None and game.n_dual > 0:
            lmin, normA = game.constraint_spectrum
            if lmin <= 0:
                raise ContractViolation("constraint matrix is not full row rank")
            if self.mu_A > lmin * (1 + rtol):
                raise ContractViolation(
                    f"mu_A={self.mu_A} exceeds lambda_min(AA^T)={lmin}"
                )
            if self.ell_A < normA * (1 - rtol):
                raise ContractViolation(f"ell_A={self.ell_A} is below ||A||={normA}")
        return self


@dataclass
class PrimalDualPoint:
    """A primal-dual pair ``omega = col(x, lam)``.

    ``lam`` holds the coupling multipliers followed by the private ones.
    """

    x: np.ndarray
    lam: np.ndarray

    @property
    def omega(self):
        return np.concatenate([self.x, self.lam])

    @classmethod
    def from_omega(cls, game, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (game.n + game.n_dual,):
            raise ContractViolation(
                f"omega has shape {w.shape}, expected ({game.n + game.n_dual},)"
            )
        return cls(w[:game.n].copy(), w[game.n:].copy())

    @classmethod
    def zeros(cls, game):
        return cls(np.zeros(game.n), np.zeros(game.n_dual))


# -- oracles ----------------------------------------------------------------


def _check_x(game, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (game.n,):
        raise ContractViolation(f"x has shape {x.shape}, expected ({game.n},)")
    return x


def aggregate(game, x):
    """``sigma(x) = (1/N) sum_i phi_i(x_i)``, summed in agent order."""
    x = _check_x(game, x)
    total = np.zeros(game.q)
    for i, xi in enumerate(game.split(x)):
        total = total + game.phi[i](xi)
    return total / game.N


def extended_block(game, i, x_i, sigma_est):
    r"""Agent ``i``'s gradient evaluated at an aggregate estimate.

    .. math:: \nabla_{x_i} J_i(x_i, s) + \tfrac{1}{N} D\phi_i(x_i)^\top \nabla_s J_i(x_i, s)
    """
    if not 0 <= i < game.N:
        raise ContractViolation(f"agent index {i} out of range")
    x_i = np.asarray(x_i, dtype=float)
    if x_i.shape != (game.dims[i],):
        raise ContractViolation(f"x_{i} has shape {x_i.shape}")
    sigma_est = np.asarray(sigma_est, dtype=float)
    if sigma_est.shape != (game.q,):
        raise ContractViolation(f"aggregate estimate has shape {sigma_est.shape}")
    g = game.grad_local[i](x_i, sigma_est)
    s = game.grad_agg[i](x_i, sigma_est)
    return g + (game.dphi[i](x_i).T @ s) / game.N


def pseudo_gradient(game, x):
    """Stack of each agent's own-decision gradient at the true aggregate."""
    x = _check_x(game, x)
    s = aggregate(game, x)
    return np.concatenate(
        [extended_block(game, i, xi, s) for i, xi in enumerate(game.split(x))]
    )


def residual(game, x):
    """Coupling residual ``A x - b``, accumulated as ``sum_i (A_i x_i - b_i)``."""
    x = _check_x(game, x)
    out = np.zeros(game.m)
    for Ai, bi, xi in zip(game.A_blocks, game.b_blocks, game.split(x)):
        out = out + (Ai @ xi - bi)
    return out


def kkt_residual(game, x):
    """Residual of every equality row: coupling rows first, then private rows."""
    r = residual(game, x)
    if game.m_local == 0:
        return r
    xs = game.split(x)
    loc = [Ci @ xi - di for Ci, di, xi in zip(game.C_blocks, game.d_blocks, xs)]
    return np.concatenate([r, *loc])


def dual_action(game, i, lam):
    """Agent ``i``'s block of ``A_kkt^T lam``."""
    out = game.A_blocks_T[i] @ lam[:game.m]
    if game.local_dims[i]:
        mu = game.split_local(lam[game.m:])[i]
        out = out + game.C_blocks_T[i] @ mu
    return out


def affine_part(game):
    """Recover ``(M, c)`` with ``F(x) = M x + c`` for an affine pseudo-gradient.

    Evaluates ``F`` at the origin and at the unit vectors, so the result is
    exact (up to rounding) only when ``F`` really is affine.
    """
    c = pseudo_gradient(game, np.zeros(game.n))
    M = np.empty((game.n, game.n))
    e = np.zeros(game.n)
    for k in range(game.n):
        e[k] = 1.0
        M[:, k] = pseudo_gradient(game, e) - c
        e[k] = 0.0
    return M, c


def _ball(rng, size, dim, radius):
    d = rng.standard_normal((size, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(size) ** (1.0 / dim)
    return d * r[:, None]


def estimate_constants(game, sample_count=1000, radius=10.0, seed=0, center=None):
    """Certify the game constants on a ball by sampling pairs of points.

    ``mu_F``, ``ell_F`` and ``ell_sigma`` are extreme ratios over
    ``sample_count`` random pairs drawn uniformly from the ball of the given
    radius around ``center`` (origin by default).  ``mu_A`` and ``ell_A`` are
    exact.

    Raises
    ------
    NotStronglyMonotone
        If some sampled pair has a non-positive monotonicity ratio.
    """
    if sample_count < 2:
        raise ContractViolation("sample_count must be at least 2")
    rng = np.random.default_rng(seed)
    c0 = np.zeros(game.n) if center is None else _check_x(game, center)
    X = c0 + _ball(rng, sample_count, game.n, radius)
    Y = c0 + _ball(rng, sample_count, game.n, radius)
    mu = np.inf
    ell = 0.0
    ell_sigma = 0.0
    for x, y in zip(X, Y):
        dx = x - y
        nd2 = dx @ dx
        if nd2 == 0:
            continue
        dF = pseudo_gradient(game, x) - pseudo_gradient(game, y)
        mu = min(mu, (dF @ dx) / nd2)
        ell = max(ell, np.linalg.norm(dF) / np.sqrt(nd2))
        for i, (xi, yi) in enumerate(zip(game.split(x), game.split(y))):
            di = np.linalg.norm(xi - yi)
            if di > 0:
                dphi = np.linalg.norm(game.phi[i](xi) - game.phi[i](yi))
                ell_sigma = max(ell_sigma, dphi / di)
    if not mu > 0:
        raise NotStronglyMonotone(
            f"game not strongly monotone on sampled region (min ratio {mu:.3g})"
        )
    mu_A, ell_A = game.constraint_spectrum
    return GameConstants(float(mu), float(ell), mu_A, ell_A, float(ell_sigma))


def check_jacobians(game, points, h=1e-6):
    """Largest relative mismatch between ``dphi`` and central differences of ``phi``."""
    worst = 0.0
    for x in points:
        for i, xi in enumerate(game.split(np.asarray(x, dtype=float))):
            J = _dense(game.dphi[i](xi)).reshape(game.q, game.dims[i])
            fd = np.empty_like(J)
            for k in range(game.dims[i]):
                e = np.zeros(game.dims[i])
                e[k] = h
                fd[:, k] = (game.phi[i](xi + e) - game.phi[i](xi - e)) / (2 * h)
            scale = max(np.abs(J).max(), 1.0)
            worst = max(worst, np.abs(J - fd).max() / scale)
    return worst
