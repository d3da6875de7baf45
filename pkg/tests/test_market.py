import numpy as np
import pytest

from vgne.game import estimate_constants, pseudo_gradient
from vgne.graphs import complete_graph, ring_graph
from vgne.metric import kkt_apply
from vgne.online import kkt_root, measure_drift
from vgne.market import (
    MarketLayout,
    ProsumerSpec,
    assemble_dayahead,
    balance_violation,
    barrier,
    barrier_grad,
    barrier_quantities,
    build_dayahead_game,
    build_realtime_sequence,
    build_slot_game,
    initial_decision,
    layout,
    reciprocity_violation,
    slot_solution,
    synthetic_specs,
    trading_graph,
)

GAMMA = 1e3


def test_barrier_junction_is_c1():
    knot = 1 / GAMMA
    log_branch = -np.log(knot)
    lin_branch = -GAMMA * knot + 1 - np.log(knot)
    assert abs(log_branch - lin_branch) <= 1e-12
    assert barrier(knot, GAMMA) == pytest.approx(np.log(GAMMA), abs=1e-12)
    # one-sided slopes: -1/y from the log branch, -gamma from the line
    assert abs(-1 / knot - (-GAMMA)) <= 1e-12 * GAMMA
    assert barrier_grad(knot, GAMMA) == -GAMMA
    assert barrier_grad(knot * (1 + 1e-12), GAMMA) == pytest.approx(-GAMMA, rel=1e-11)


def test_barrier_negative_argument():
    assert barrier(-1.0, GAMMA) == pytest.approx(GAMMA + 1 - np.log(1 / GAMMA), rel=1e-15)
    assert barrier_grad(-1.0, GAMMA) == -GAMMA


def test_barrier_log_branch_for_large_argument():
    # piecewise reading: y = 1 is on the log branch (see the decisions ledger)
    assert barrier(1.0, GAMMA) == 0.0
    assert barrier_grad(2.0, GAMMA) == -0.5
    y = np.linspace(-2, 5, 701)
    assert np.all(np.isfinite(barrier(y, GAMMA)))
    # convex: gradient non-decreasing
    assert np.all(np.diff(barrier_grad(y, GAMMA)) >= 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        ProsumerSpec(np.ones(3), np.ones(3), kappa_tr=0.0)
    with pytest.raises(ValueError):
        ProsumerSpec(np.ones(3), np.ones(3), gamma=-1.0)


def test_reciprocity_structure():
    G = trading_graph(6, seed=4)
    specs = synthetic_specs(6, 8, seed=0)
    game = build_dayahead_game(specs, G, T=8)
    A = game.A.toarray()
    assert np.array_equal(A @ A.T, 2 * np.eye(game.m))
    ev = np.linalg.eigvalsh(A @ A.T)
    assert ev[0] == pytest.approx(2.0) and np.sqrt(ev[-1]) == pytest.approx(np.sqrt(2))
    assert game.coupling_norm == pytest.approx(np.sqrt(2))


def test_layout_bookkeeping():
    G = ring_graph(4)
    lay = MarketLayout.from_graph(G, 3)
    assert lay.neighbors == ((1, 3), (0, 2), (1, 3), (0, 2))
    assert lay.dims == (12, 12, 12, 12)
    assert lay.m == 4 * 3
    assert lay.trade_col(0, 3) == 3 and lay.index(0, 2, 3) == 11


def _cost(specs, lay, x, i, t):
    """Independent transcription of prosumer ``i``'s slot-``t`` cost."""
    s = specs[i]
    blocks, o = [], 0
    for k in range(lay.N):
        blocks.append(x[o:o + lay.dims[k]].reshape(lay.T, lay.width(k)))
        o += lay.dims[k]
    sigma = sum(b[t, 0] for b in blocks)
    X = blocks[i][t]
    tr = X[2:]
    return (s.c_mg * sigma * X[0] + s.c_dg * (X[1] - s.dg_ref[t]) ** 2
            + np.sum(s.c_tr * tr + s.kappa_tr * tr ** 2)
            + barrier(X[0], s.gamma) + barrier(X[1], s.gamma))


def _fd_pseudo_gradient(specs, lay, x, h=1e-6):
    out = np.zeros_like(x)
    o = 0
    for i in range(lay.N):
        for k in range(lay.dims[i]):
            t = k // lay.width(i)
            e = np.zeros_like(x)
            e[o + k] = h
            out[o + k] = (_cost(specs, lay, x + e, i, t) - _cost(specs, lay, x - e, i, t)) / (2 * h)
        o += lay.dims[i]
    return out


def test_pseudo_gradient_matches_finite_differences():
    G = trading_graph(5, seed=2)
    specs = synthetic_specs(5, 3, seed=1)
    game = build_dayahead_game(specs, G, T=3)
    lay = layout(specs, G, 3)
    x = initial_decision(lay, specs, seed=3)
    x = x + 0.3 * np.random.default_rng(0).random(x.size)
    F = pseudo_gradient(game, x)
    assert np.allclose(F, _fd_pseudo_gradient(specs, lay, x), atol=1e-6, rtol=1e-6)


def test_gradient_at_origin_is_barrier_stack():
    G = ring_graph(4)
    T = 2
    specs = [ProsumerSpec(np.zeros(T), np.zeros(T), c_tr=0.0) for _ in range(4)]
    game = build_dayahead_game(specs, G, T=T)
    lay = layout(specs, G, T)
    F = pseudo_gradient(game, np.zeros(game.n))
    expected = []
    for i in range(4):
        X = np.zeros((T, lay.width(i)))
        X[:, :2] = barrier_grad(0.0, GAMMA)
        expected.append(X.ravel())
    assert np.array_equal(F, np.concatenate(expected))


def test_symmetric_game_has_no_trades():
    # identical prosumers; zero demand would pin x_mg + x_dg = 0 onto the
    # stiff linear branch, the symmetry argument is the same
    G = complete_graph(4)
    specs = [ProsumerSpec(np.full(1, 3.0), np.ones(1), c_tr=0.0) for _ in range(4)]
    game = build_slot_game(specs, G, 0)
    lay = layout(specs, G, 1)
    w = kkt_root(game, np.concatenate([initial_decision(lay, specs), np.zeros(game.n_dual)]))
    x = w[:game.n]
    trades = np.concatenate([x[o + 2:o + lay.width(i)] for i, o in
                             enumerate(game.offsets[:-1])])
    assert np.abs(trades).max() <= 1e-9
    assert barrier_quantities(lay, x).min() > 0


@pytest.fixture(scope="module")
def slot_market():
    G = trading_graph(6, seed=0)
    specs = synthetic_specs(6, 4, seed=0)
    lay = layout(specs, G, 4)
    roots = []
    for t in range(4):
        g = build_slot_game(specs, G, t)
        w0 = np.concatenate([initial_decision(layout(specs, G, 1), specs), np.zeros(g.n_dual)])
        roots.append(kkt_root(g, w0))
    return specs, G, lay, roots


def test_equilibrium_constraints(slot_market):
    specs, G, lay, roots = slot_market
    for t, w in enumerate(roots):
        g = build_slot_game(specs, G, t)
        x = w[:g.n]
        assert reciprocity_violation(g, x) <= 1e-9
        assert balance_violation(g, x) <= 1e-9
        assert barrier_quantities(layout(specs, G, 1), x).min() > 0


def test_dayahead_root_is_slot_concatenation(slot_market):
    specs, G, lay, roots = slot_market
    game = build_dayahead_game(specs, G, T=4)
    omega = assemble_dayahead(lay, roots)
    assert np.linalg.norm(kkt_apply(game, omega)) <= 1e-9
    for t in range(4):
        assert np.array_equal(slot_solution(lay, omega, t), roots[t])
    with pytest.raises(ValueError):
        assemble_dayahead(lay, roots[:3])


def test_isolated_prosumer_allowed():
    G = np.zeros((3, 3), dtype=bool)
    G[0, 1] = G[1, 0] = True
    specs = synthetic_specs(3, 2, seed=0)
    game = build_dayahead_game(specs, G, T=2)
    assert game.dims == (6, 6, 4)
    assert game.A_blocks[2].nnz == 0


def test_wrong_spec_count():
    with pytest.raises(ValueError):
        build_dayahead_game(synthetic_specs(3, 2), ring_graph(4), T=2)


def test_constant_profiles_are_static():
    specs = [ProsumerSpec(np.full(6, 3.0), np.full(6, 1.0)) for _ in range(4)]
    seq = build_realtime_sequence(specs, ring_graph(4), T=6)
    delta, delta_phi = measure_drift(seq, 6, solver=lambda g, w: kkt_root(g, w))
    assert delta == 0.0 and delta_phi == 0.0
    with pytest.raises(IndexError):
        seq(7)


def test_sinusoidal_profiles_drift_finitely():
    specs = synthetic_specs(6, 96, seed=0)
    seq = build_realtime_sequence(specs, trading_graph(6, seed=0), T=96)
    delta, delta_phi = measure_drift(seq, 12, solver=lambda g, w: kkt_root(g, w))
    assert 0 < delta < 5 and delta_phi == 0.0


def test_strong_monotonicity_on_operating_region(slot_market):
    specs, G, _, roots = slot_market
    g = build_slot_game(specs, G, 0)
    c = estimate_constants(g, sample_count=300, radius=0.25, center=roots[0][:g.n])
    assert c.mu_F > 0 and np.isfinite(c.ell_F)
