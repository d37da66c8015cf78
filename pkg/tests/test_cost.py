import numpy as np
import pytest

from conftest import random_model
from mfstackelberg.cost import (cost_to_go, cost_to_go_curve, follower_cost, follower_cost_b0, optimal_feedback,
                                solve_game)
from mfstackelberg.fixtures import crossing_ia, crossing_ib, perturbation_base
from mfstackelberg.matrixops import InvalidInputError, TimeGrid
from mfstackelberg.model import GameKind, make_symmetric_base, reduce_to_unit_k

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")

# forward mean/covariance propagation (tests/oracles.py), random_model(default_rng(101)) draws
FORWARD_ORACLE = [
    ({}, {GameKind.NASH: 0.17517601678869835, GameKind.PARETO: 0.17668064112044787}),
    ({}, {GameKind.NASH: 0.032978925434829914, GameKind.PARETO: 0.03286216359612604}),
    ({}, {GameKind.NASH: 0.4032865299493405, GameKind.PARETO: 0.40486339851903996}),
    (dict(na=2, nb=1, n1=2), {GameKind.NASH: 0.6308692687068672, GameKind.PARETO: 0.6298950893480671}),
]
PUBLISHED_SET_COSTS = {
    "Ia": {GameKind.NASH: 43.5911175775941, GameKind.PARETO: 39.41615375432354},
    "Ib": {GameKind.NASH: 38.023738595438886, GameKind.PARETO: 39.22284157824492},
}


def _oracle_models():
    rng = np.random.default_rng(101)
    return [(random_model(rng, **kw), want) for kw, want in FORWARD_ORACLE]


@pytest.mark.parametrize("game", list(GameKind))
def test_cost_matches_forward_moment_oracle(game):
    for p, want in _oracle_models():
        assert follower_cost(p, game, check_assumptions=False).J1 == pytest.approx(want[game], rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("name,factory", [("Ia", crossing_ia), ("Ib", crossing_ib)])
def test_cost_matches_oracle_on_crossing_sets(name, factory):
    for game in GameKind:
        assert follower_cost(factory(), game).J1 == pytest.approx(PUBLISHED_SET_COSTS[name][game], rel=1e-9)


def test_report_components_add_up():
    for p, _ in _oracle_models():
        r = follower_cost(p, "pareto", check_assumptions=False)
        assert abs(sum(r.components.values()) - r.J1) <= 1e-12 * max(1.0, abs(r.J1))


def test_zero_model_costs_nothing():
    p = make_symmetric_base(dict(T=1.0, A_1=-1.0, B_1=0.0, C_1=0.0, E_1=1.0, Q_1=1.0, R_1=1.0, A_ab=-1.0,
                                 B_alpha=0.0, D_ab=1.0, Q_alpha=1.0, R_alpha=1.0), 1.0)
    p = p.replace(sigma_1=0.0, sigma_alpha=0.0, sigma_beta=0.0, mean_eta_1=0.0, mean_eta_alpha=0.0,
                  mean_eta_beta=0.0)
    for game in GameKind:
        assert follower_cost(p, game, check_assumptions=False).J1 == 0.0


@pytest.mark.parametrize("game", list(GameKind))
def test_reduced_formula_matches_full_cost(game):
    for p in (reduce_to_unit_k(crossing_ia()), reduce_to_unit_k(perturbation_base(0.5))):
        full = follower_cost(p, game).J1
        assert follower_cost_b0(p, game).J1 == pytest.approx(full, rel=1e-7)


def test_reduced_formula_needs_unit_base_model():
    with pytest.raises(InvalidInputError):
        follower_cost_b0(crossing_ia(), "nash")


@pytest.mark.parametrize("game", list(GameKind))
def test_grid_refinement(game):
    for p in (crossing_ia(), perturbation_base()):
        a = follower_cost(p, game, TimeGrid.horizon(p.T, 2000)).J1
        b = follower_cost(p, game, TimeGrid.horizon(p.T, 4000)).J1
        assert abs(a - b) < 1e-6 * abs(b)


def test_optimal_feedback_is_linear_and_vanishes_at_zero():
    sol = solve_game(crossing_ia(), "nash")
    zero = optimal_feedback(sol, 0.5, np.zeros(5), 0.0)
    assert not np.any(zero.u1) and not np.any(zero.u_alpha) and not np.any(zero.u_beta)
    x, y = np.array([1.0, -2.0, 0.5, 0.3, 0.1]), np.array([0.2, 0.4, -1.0, 0.0, 2.0])
    fx, fy, fs = (optimal_feedback(sol, 0.5, v, d) for v, d in ((x, 0.3), (y, -0.7), (2 * x + y, -0.1)))
    for name in ("u1", "u_alpha", "u_beta"):
        np.testing.assert_allclose(getattr(fs, name), 2 * getattr(fx, name) + getattr(fy, name), atol=1e-12)
    with pytest.raises(InvalidInputError):
        optimal_feedback(sol, 3.0, x, 0.0)


def test_optimal_feedback_leader_control_uses_own_costate():
    sol = solve_game(crossing_ia(), "pareto")
    x = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    u = optimal_feedback(sol, 0.0, x, 0.0)
    G = sol.paths.Gamma.values[0]
    assert u.u_alpha[0] == pytest.approx(-G[0, 0])
    assert u.u_beta[0] == pytest.approx(-G[1, 0] / 4.0)


def test_cost_to_go_endpoints():
    p = perturbation_base()
    sol = solve_game(p, "nash")
    curve = cost_to_go_curve(sol)
    assert curve[0] == pytest.approx(sol.report().J1, rel=1e-9)
    assert cost_to_go(p, "nash", 0.0) == pytest.approx(curve[0], rel=1e-12)
    assert np.all(np.diff(curve) <= 1e-9)
    with pytest.raises(InvalidInputError):
        cost_to_go(p, "nash", -0.1)


def test_cost_to_go_at_horizon_is_terminal_cost():
    p = crossing_ia()
    # no terminal weight on the follower
    assert cost_to_go(p, "pareto", p.T) == pytest.approx(0.0, abs=1e-12)


def test_eta1_polynomial_reproduces_cost():
    sol = solve_game(crossing_ia(), "nash")
    c0, c1, c2 = sol.eta1_quadratic()
    for e in (-3.0, 0.0, 5.0):
        assert c0 + c1 * e + c2 * e * e == pytest.approx(sol.cost_at_eta1(e), rel=1e-12)
