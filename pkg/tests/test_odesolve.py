import dataclasses
import io
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mfstackelberg.assembly import assemble, cost_weights
from mfstackelberg.fixtures import crossing_ia, crossing_ib, perturbation_base
from mfstackelberg.matrixops import InvalidInputError, TimeGrid
from mfstackelberg.model import GameKind, reduce_to_unit_k
from mfstackelberg.odesolve import (FiniteEscapeError, NotRepresentableError, path_to_csv, riccati_residual,
                                    solve_follower_moments, solve_gamma0, solve_k_l, solve_lyapunov_K,
                                    solve_offset, solve_reduced_paths, solve_riccati, solve_riccati_exp_oracle)
from oracles import riccati_ivp
from test_acceptance import _admissible, sign_violations
from conftest import random_base, random_model

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def toy(A, B, C, D, E, T=1.0, **extra):
    I = np.eye(5)
    m = {k: np.asarray(v, float) * I if np.ndim(v) == 0 else np.asarray(v, float)
         for k, v in dict(A=A, B=B, C=C, D=D, E=E).items()}
    return dataclasses.replace(assemble(perturbation_base(), "nash"), T=T, **m, **extra)


def test_zero_dynamics_keep_terminal_value():
    E = np.arange(25.0).reshape(5, 5) / 10
    path = solve_riccati(toy(A=0, B=0, C=0, D=0, E=E), TimeGrid.horizon(1.0, 50))
    for v in path.values:
        np.testing.assert_array_equal(v, E)


def test_scalar_riccati_is_tanh():
    grid = TimeGrid.horizon(1.0, 1000)
    path = solve_riccati(toy(A=0, B=1, C=0, D=1, E=0), grid)
    assert path.values[0][0, 0] == pytest.approx(math.tanh(1.0), abs=1e-10)
    for v, t in zip(path.values, grid.nodes):
        np.testing.assert_allclose(v, math.tanh(1.0 - t) * np.eye(5), atol=1e-10)


def test_finite_escape_time():
    # -G' = G^2 + I from zero: tan(T - t), escaping at T - pi/2
    with pytest.raises(FiniteEscapeError) as err:
        solve_riccati(toy(A=0, B=-1, C=0, D=1, E=0, T=2.0), TimeGrid.horizon(2.0, 4000))
    assert err.value.time == pytest.approx(2.0 - math.pi / 2, abs=5e-3)


def test_exp_oracle_matches_stepper_and_flags_singularity():
    sys = assemble(perturbation_base(), "pareto")
    grid = TimeGrid.horizon(sys.T, 400)
    np.testing.assert_allclose(solve_riccati_exp_oracle(sys, grid).values, solve_riccati(sys, grid).values,
                               atol=1e-9)
    with pytest.raises(NotRepresentableError):
        solve_riccati_exp_oracle(toy(A=0, B=-1, C=0, D=1, E=0, T=2.0), TimeGrid.horizon(2.0, 200),
                                 cond_limit=1e3)


def test_grid_must_span_horizon():
    with pytest.raises(InvalidInputError):
        solve_riccati(assemble(crossing_ia(), "nash"), TimeGrid.horizon(1.0, 10))


@pytest.mark.parametrize("game", list(GameKind))
def test_riccati_matches_dense_ivp(game):
    rng = np.random.default_rng(3)
    for p in (crossing_ia(), crossing_ib(), random_model(rng, na=2, nb=1, n1=2)):
        sys = assemble(p, game)
        ref = riccati_ivp(sys.A, sys.B, sys.C, sys.D, sys.E, sys.T)
        path = solve_riccati(sys, TimeGrid.horizon(sys.T, 2000))
        for i in (0, 500, 1500):
            np.testing.assert_allclose(path.values[i], ref(path.grid.nodes[i]), atol=1e-9)


@pytest.mark.parametrize("game", list(GameKind))
def test_riccati_residual(game):
    for p in (crossing_ia(), perturbation_base()):
        sys = assemble(p, game)
        coarse = riccati_residual(sys, solve_riccati(sys, TimeGrid.horizon(p.T, 2000)))
        fine = riccati_residual(sys, solve_riccati(sys, TimeGrid.horizon(p.T, 4000)))
        # the three-point stencil itself is second order, so the residual quarters per halving
        assert 3.5 < coarse / fine < 4.5
        assert fine < 1e-6


def test_offset_closed_form():
    c, m, h, T = 0.7, 0.3, -0.4, 1.5
    sys = toy(A=0, B=0, C=c, D=0, E=0, T=T, M=np.full(5, m), h=np.full(5, h))
    grid = TimeGrid.horizon(T, 1000)
    g = solve_offset(sys, solve_riccati(sys, grid))
    s = T - grid.nodes
    exact = h * np.exp(c * s) + m / c * (np.exp(c * s) - 1)
    np.testing.assert_allclose(g.values[:, 0], exact, atol=1e-10)


def test_offset_vanishes_without_affine_terms():
    sys = assemble(crossing_ia(), "nash")
    g = solve_offset(sys, solve_riccati(sys))
    assert not np.any(g.values)


def test_follower_riccati_and_moments_closed_form():
    # A1 = 0, unit weights: G0 = tanh(T - t), closed loop -tanh(T - t)
    p = crossing_ia().replace(A_1=0.0, sigma_1=0.3, cov_eta_1=0.5)
    T = p.T
    grid = TimeGrid.horizon(T, 2000)
    G0 = solve_gamma0(p, grid)
    t = grid.nodes
    np.testing.assert_allclose(G0.values[:, 0, 0], np.tanh(T - t), atol=1e-10)
    mom = solve_follower_moments(p, G0)
    ratio = (np.cosh(T - t) / np.cosh(T)) ** 2
    np.testing.assert_allclose(mom.P0.values[:, 0, 0], 0.5 * ratio, atol=1e-9)
    sigma = 0.09 * np.cosh(T - t) ** 2 * (np.tanh(T) - np.tanh(T - t))
    np.testing.assert_allclose(mom.Sigma0.values[:, 0, 0], sigma, atol=1e-9)
    np.testing.assert_allclose(mom.Abar1.values[:, 0, 0], -np.tanh(T - t), atol=1e-10)


def test_follower_riccati_terminal_value():
    G0 = solve_gamma0(crossing_ia())
    assert G0.values[-1][0, 0] == 0.0
    assert np.all(G0.values[:, 0, 0] >= 0)


@pytest.mark.parametrize("game", list(GameKind))
def test_lyapunov_matches_dense_ivp(game):
    p = random_model(np.random.default_rng(8))
    sys, w = assemble(p, game), cost_weights(p)
    grid = TimeGrid.horizon(p.T, 2000)
    gamma = solve_riccati(sys, grid)
    K = solve_lyapunov_K(sys, w, gamma)
    G = riccati_ivp(sys.A, sys.B, sys.C, sys.D, sys.E, sys.T)
    n = sys.size

    def rhs(tau, y):
        t = p.T - tau
        Kt, Gt = y.reshape(n, n), G(t)
        phi = sys.A - sys.B @ Gt
        return (w.Q_bold + Kt @ phi + phi.T @ Kt + w.R_of_t(Gt)).ravel()

    ref = solve_ivp(rhs, [0, p.T], w.Qbar_bold.ravel(), rtol=1e-12, atol=1e-13, method="DOP853")
    np.testing.assert_allclose(K.values[0], ref.y[:, -1].reshape(n, n), atol=1e-8)
    for v in K.values:
        assert np.linalg.eigvalsh(v).min() >= -1e-10


def test_k_l_vanish_on_base_model():
    p = crossing_ia()
    sys, w = assemble(p, "pareto"), cost_weights(p)
    gamma = solve_riccati(sys)
    g = solve_offset(sys, gamma)
    k, l = solve_k_l(sys, w, gamma, g, solve_lyapunov_K(sys, w, gamma))
    assert not np.any(k.values) and not np.any(l.values)


def test_reduced_paths_match_full_solution():
    unit = reduce_to_unit_k(crossing_ia())
    grid = TimeGrid.horizon(unit.T, 1000)
    rp = solve_reduced_paths(unit, grid)
    for game in GameKind:
        G = solve_riccati(assemble(unit, game), grid).values
        r = rp[game]
        np.testing.assert_allclose(r.Gamma_ab.values, G[:, 0, 0] + G[:, 0, 1], atol=1e-10)
        np.testing.assert_allclose(r.Gamma21.values, G[:, 2, 0], atol=1e-10)
        np.testing.assert_allclose(r.Gamma22.values, G[:, 2, 2], atol=1e-10)
        assert r.psi_residual < 1e-7


def test_path_csv_layout():
    buf = io.StringIO()
    G0 = solve_gamma0(crossing_ia(), TimeGrid.horizon(2.0, 4))
    path_to_csv(G0, buf, name="G0")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,G0_00" and len(lines) == 6
    assert float(lines[-1].split(",")[1]) == 0.0


def _strengthened(p, case):
    d = {n: float(np.ravel(getattr(p, n))[0]) for n in ("C_1", "Q_1", "G_1", "E_1", "R_1", "Qbar_1",
                                                         "Gbar_1", "A_1", "A_alpha", "B_alpha")}
    s1 = d["E_1"] ** 2 / d["R_1"]
    V, Vb = d["Q_1"] * d["G_1"] * s1, d["Qbar_1"] * d["Gbar_1"] * s1
    At = d["A_1"] + d["A_alpha"] + d["B_alpha"]
    fol = 1 if case in (1, 3) else -1
    return fol * (d["C_1"] + Vb) > 0 and fol * (d["C_1"] * At - V) <= 0


def test_sign_statements_hold_under_strengthened_comparison_condition():
    # terminal value and source of the closed-loop coupling both carry the follower sign
    rng = np.random.default_rng(7)
    checked = 0
    for case in (1, 2, 3, 4):
        n = 0
        while n < 10:
            p = random_base(rng, case)
            if not (_admissible(p) and _strengthened(p, case)):
                continue
            assert sign_violations(case, p) == []
            n += 1
            checked += 1
    assert checked == 40


def test_moments_without_follower_control():
    # no control channel: closed loop equals A1
    grid = TimeGrid.horizon(2.0, 1000)
    t = grid.nodes
    flat = crossing_ia().replace(E_1=0.0, A_1=0.0, sigma_1=0.3)
    mom = solve_follower_moments(flat, solve_gamma0(flat, grid))
    np.testing.assert_allclose(mom.Sigma0.values[:, 0, 0], 0.09 * t, atol=1e-12)
    drift = crossing_ia().replace(E_1=0.0, A_1=-0.4, cov_eta_1=0.7)
    mom = solve_follower_moments(drift, solve_gamma0(drift, grid))
    np.testing.assert_allclose(mom.P0.values[:, 0, 0], 0.7 * np.exp(-0.8 * t), rtol=1e-10)
