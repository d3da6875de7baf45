"""
Full-information equilibrium seeking
====================================

A small affine aggregative game: six agents, two decisions each, two shared
equality constraints.  We certify the constants, build the weighted metric
and watch the primal-dual iteration contract at the predicted rate.
"""

import numpy as np

from vgne import build_metric, contraction_factor, default_step, solve, SolverConfig
from vgne.synthetic import affine_solution, random_affine_game

# draw a game whose constants are known exactly (eigenvalues of its affine map)
game, consts = random_affine_game(N=6, n_i=2, m=2, q=2, seed=1)
print(game.name, "n =", game.n, "m =", game.m)
print("mu_F = %.4f  ell_F = %.4f  mu_A = %.4f  ell_A = %.4f"
      % (consts.mu_F, consts.ell_F, consts.mu_A, consts.ell_A))

# the metric fixes the weight nu and the operator moduli measured in it
met = build_metric(game, consts)
alpha = default_step(met)
rho = contraction_factor(met, alpha)
print("nu = %.4f  step = %.5f  rho = %.6f" % (met.nu, alpha, rho))

# exact equilibrium from one KKT solve, used only to measure the error
w_star = affine_solution(game)

res = solve(game, met, SolverConfig(alpha=alpha, tol=1e-9), reference=w_star)
print("converged:", res.converged, "after", res.iterations, "iterations")

# squared P-distance to the equilibrium, every 1000 iterations
d = np.array([row[2] for row in res.trace])
for k in range(0, len(d), 1000):
    print("%6d  %.3e" % (k, d[k]))

# the observed per-step ratio never exceeds rho
print("worst observed ratio %.6f <= rho %.6f" % ((d[1:] / d[:-1]).max(), rho))

x_star = res.point.x
print("coupling residual ||Ax - b|| = %.2e" % np.linalg.norm(game.A @ x_star - game.b))
