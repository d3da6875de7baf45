"""
Peer-to-peer energy market
==========================

Six prosumers buy from the grid, run a generator and trade bilaterally with
their trading partners.  Trades must be reciprocal and every prosumer must
balance its own demand.  In real time each prosumer only knows the current
quarter hour, so the market clears by tracking.
"""

import numpy as np

from vgne import build_metric
from vgne import market as mk
from vgne.game import GameConstants, estimate_constants
from vgne.graphs import metropolis_weights, ring_graph
from vgne.online import kkt_root, online_distributed_init, online_distributed_step

T = 96
specs = mk.synthetic_specs(N=6, T=T, seed=0)
G = mk.trading_graph(6, seed=0)
lay = mk.layout(specs, G, 1)
print("trading partners:", [list(n) for n in lay.neighbors])

seq = mk.build_realtime_sequence(specs, G, T)

# reference clearing of every slot (a Newton-type root solve of the KKT system)
sols, w = [], None
for t in range(1, T + 1):
    g = seq(t)
    w = kkt_root(g, np.concatenate([np.ones(g.n), np.zeros(g.n_dual)]) if w is None else w)
    sols.append(w)

g1 = seq(1)
x1 = sols[0][:g1.n]
# barrier_quantities lists (grid, generation) per prosumer
print("slot 0 grid purchases:", np.round(mk.barrier_quantities(lay, x1)[0::2], 3))

# constants certified on a small ball around the first clearing point
c = estimate_constants(g1, 500, radius=0.25, center=x1)
mu_A, ell_A = g1.constraint_spectrum
met = build_metric(g1, GameConstants(c.mu_F, c.ell_F, mu_A, ell_A, c.ell_sigma))
print("estimated mu_F %.3f, ell_F %.3f" % (c.mu_F, c.ell_F))

ring = metropolis_weights(ring_graph(6))
x0 = mk.initial_decision(lay, specs)
print("\n  K  mean error  mean reciprocity gap  min grid/generation")
for K in (1, 10, 100):
    s = online_distributed_init(g1, x0)
    err, gap, low = [], [], np.inf
    for t in range(1, T + 1):
        s = online_distributed_step(seq, t, ring, s, 0.05, K)
        err.append(met.norm(s.xi() - sols[t - 1]))
        gap.append(mk.reciprocity_violation(seq(t), s.x))
        low = min(low, mk.barrier_quantities(lay, s.x).min())
    print("%3d  %10.4f  %19.4f  %19.3f" % (K, np.mean(err), np.mean(gap), low))
