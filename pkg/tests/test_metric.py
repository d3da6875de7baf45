import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import scalar_data
from oracles import affine_constants, affine_equilibrium, metric_matrix
from vgne.exceptions import ContractViolation, DegenerateGame, InadmissibleStep
from vgne.game import GameConstants
from vgne.metric import (
    admissible_window,
    build_metric,
    contraction_factor,
    default_step,
    kkt_apply,
    nu_upper_bound,
    solve_affine_kkt,
    window_from_constants,
)
from vgne.synthetic import affine_game, affine_solution, random_affine_game

UNIT = GameConstants(1.0, 1.0, 1.0, 1.0)


def test_nu_upper_bound_examples():
    assert nu_upper_bound(UNIT) == pytest.approx(0.8)
    assert nu_upper_bound(GameConstants(1.0, 2.0, 2.0, np.sqrt(2.0))) == pytest.approx(1 / 3)
    vals = [nu_upper_bound(GameConstants(mu, 2.0, 1.0, 1.0)) for mu in (1.0, 0.1, 1e-3, 1e-6)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-5


def test_scalar_metric(scalar_game):
    met = build_metric(scalar_game, UNIT)
    assert met.nu == pytest.approx(0.4)
    # 2x2 eigenvalue oracle: lambda_min([[0.6, -0.2], [-0.2, 0.4]]) / 1.4
    assert met.mu_op == pytest.approx((0.5 - np.sqrt(0.05)) / 1.4, rel=1e-12)
    assert met.lambda_max == pytest.approx(1.4)
    assert met.mu_op <= met.ell_op


def test_unconstrained_metric():
    g = affine_game(scalar_data(H=2.0, A=None))
    met = build_metric(g, GameConstants(2.0, 2.0, 0.0, 0.0))
    assert np.array_equal(met.P, np.eye(1))
    assert (met.mu_op, met.ell_op) == (2.0, 2.0)


def test_scalar_certificate_by_sampling(scalar_game):
    met = build_metric(scalar_game, UNIT)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        w, v = 5 * rng.standard_normal((2, 2))
        d = w - v
        lhs = met.inner(kkt_apply(scalar_game, w) - kkt_apply(scalar_game, v), d)
        assert lhs >= met.mu_op * met.norm_sq(d) - 1e-12


def test_P_eigenstructure(affine6_certified):
    g, c = affine6_certified
    met = build_metric(g, c)
    ev = np.linalg.eigvalsh(met.P)
    assert ev[0] == pytest.approx(met.lambda_min, abs=1e-12)
    assert ev[-1] == pytest.approx(met.lambda_max, abs=1e-12)
    P = metric_matrix(met.nu, g.A)
    assert np.abs(P - met.P).max() == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=14, max_size=14))
def test_P_norm_sandwich(vals):
    g, c = random_affine_game(6, 2, 2, 2, seed=1)
    met = build_metric(g, c)
    z = np.array(vals)
    nz = z @ z
    assert met.lambda_min * nz * (1 - 1e-12) - 1e-12 <= met.norm_sq(z)
    assert met.norm_sq(z) <= met.lambda_max * nz * (1 + 1e-12) + 1e-12
    assert met.norm_sq(z) == pytest.approx(z @ met.P @ z, rel=1e-9, abs=1e-9)


def test_weighted_lipschitz_and_contraction(affine6_certified):
    g, c = affine6_certified
    met = build_metric(g, c)
    alpha = default_step(met)
    rho = contraction_factor(met, alpha)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        w, v = rng.standard_normal((2, g.n + g.n_dual))
        d = w - v
        dA = kkt_apply(g, w) - kkt_apply(g, v)
        assert met.norm(dA) <= met.ell_op * met.norm(d) + 1e-12
        step = d - alpha * dA
        assert met.norm_sq(step) <= rho * met.norm_sq(d) + 1e-12


def test_kkt_apply_examples(scalar_game):
    assert kkt_apply(scalar_game, np.array([1.0, 1.0])) == pytest.approx([2.0, -1.0])
    g = affine_game(scalar_data(H=3.0, A=None))
    assert kkt_apply(g, np.array([2.0])) == pytest.approx([6.0])
    with pytest.raises(ContractViolation):
        kkt_apply(scalar_game, np.zeros(3))


def test_kkt_apply_vanishes_at_oracle_solution(affine6):
    data, g = affine6
    w = affine_equilibrium(data)
    assert np.abs(kkt_apply(g, w)).max() <= 1e-12


def test_solve_affine_kkt_examples():
    sol = solve_affine_kkt([[1.0]], [-2.0], [[1.0]], [1.0])
    assert sol.x == pytest.approx([1.0]) and sol.lam == pytest.approx([1.0])
    z = solve_affine_kkt(np.eye(2), np.zeros(2), np.ones((1, 2)), np.zeros(1))
    assert np.all(z.omega == 0)


def test_solve_affine_kkt_random_instance(affine6):
    data, g = affine6
    w = affine_solution(g)
    assert np.abs(kkt_apply(g, w)).max() <= 1e-10
    assert np.abs(w - affine_equilibrium(data)).max() <= 1e-10


def test_solve_affine_kkt_degenerate():
    with pytest.raises(DegenerateGame, match="degenerate affine game"):
        solve_affine_kkt(np.eye(2), np.zeros(2), np.zeros((1, 2)), np.zeros(1))


def test_contraction_factor_examples():
    class M:
        mu_op, ell_op = 1.0, 2.0
    assert contraction_factor(M, 0.25) == pytest.approx(0.75)
    assert contraction_factor(M, 1e-9) == pytest.approx(1.0, abs=1e-8)
    a = default_step(M)
    assert contraction_factor(M, a) == pytest.approx(1 - 0.25)
    with pytest.raises(InadmissibleStep) as err:
        contraction_factor(M, 0.5)
    assert err.value.interval == pytest.approx((0.0, 0.5))
    assert admissible_window(M) == (0.0, 0.5)


def test_exact_constants_match_oracle(affine6):
    data, g = affine6
    from vgne.synthetic import exact_constants
    c = exact_constants(g)
    mu_F, ell_F, mu_A, ell_A = affine_constants(data)
    assert (c.mu_F, c.ell_F) == pytest.approx((mu_F, ell_F), rel=1e-10)
    assert (c.mu_A, c.ell_A) == pytest.approx((mu_A, ell_A), rel=1e-10)


def test_window_from_constants_matches_metric(scalar_game):
    assert window_from_constants(UNIT) == pytest.approx(admissible_window(build_metric(scalar_game, UNIT)))


def test_safety_range(scalar_game):
    with pytest.raises(ContractViolation):
        build_metric(scalar_game, UNIT, safety=1.0)
