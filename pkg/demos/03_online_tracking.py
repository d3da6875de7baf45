"""
Tracking a drifting equilibrium
===============================

The constraint offsets drift linearly and the aggregation maps oscillate.
With only K iterations per time step the iterates lag behind the moving
equilibrium; the lag shrinks as K grows and stays under the predicted
radius.
"""

import numpy as np

from vgne import build_metric, contraction_factor, default_step, measure_eta, tune_alpha
from vgne.graphs import metropolis_weights, ring_graph
from vgne.online import (
    measure_drift,
    online_distributed_init,
    online_distributed_step,
    run_online_full,
    tracking_bound_distributed,
    tracking_bound_full,
    tracking_errors,
)
from vgne.synthetic import (
    affine_solution,
    drifting_sequence,
    exact_constants,
    random_affine_data,
)

H = 200
data = random_affine_data(6, 2, 2, 2, seed=1)
seq = drifting_sequence(data, b_rate=0.01, phi_amp=0.05, phi_period=15.0)

# equilibria of every instance, and how far they move per step
sols = [affine_solution(seq(t)) for t in range(1, H + 1)]
delta, delta_phi = measure_drift(seq, H, solutions=sols)
print("solution drift %.4f per step, aggregation drift %.4f" % (delta, delta_phi))

g1 = seq(1)
met = build_metric(g1, exact_constants(g1))

# full information: K primal-dual steps per time step
alpha = default_step(met)
rho = contraction_factor(met, alpha)
print("\nfull information (rho = %.5f)" % rho)
for K in (1, 5, 20):
    _, errs = run_online_full(seq, H, np.zeros(g1.n + g1.n_dual), alpha, K, met, sols)
    print("  K=%-3d tail error %.4f   bound %.4f"
          % (K, max(errs[-H // 5:]), tracking_bound_full(met, rho, K, delta)))

# distributed: K network rounds per time step
ring = metropolis_weights(ring_graph(6))
alpha = tune_alpha(g1, met, ring, xi_star=sols[0])
eta = measure_eta(g1, ring, met, alpha, sols[0])
_, ell_A = g1.constraint_spectrum
print("\ndistributed over a ring (eta = %.5f)" % eta)
for K in (10, 100):
    s = online_distributed_init(g1, np.zeros(g1.n))
    errs = []
    for t in range(1, H + 1):
        s = online_distributed_step(seq, t, ring, s, alpha, K)
        errs.append(tracking_errors(met, s, sols[t - 1])[1])
    bound = tracking_bound_distributed(met, eta, K, delta, delta_phi, g1.N, ell_A)
    print("  K=%-3d tail error %.4f   bound %.4f" % (K, max(errs[-H // 5:]), bound))
