import dataclasses
import math

import numpy as np
import pytest

from mfstackelberg.assembly import assemble
from mfstackelberg.conditions import (check_all, check_compare_assumption, check_fixed_point, check_fullcond2,
                                      check_fullcond3, perturbation_gate, riccati_norm_bound)
from mfstackelberg.fixtures import PERTURBATION_PATTERN, crossing_ia, crossing_ib, perturb, perturbation_base
from mfstackelberg.matrixops import InvalidInputError, TimeGrid
from mfstackelberg.model import GameKind
from mfstackelberg.odesolve import solve_riccati
from oracles import scalar_blocks

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def toy(A, B, C, D, E, T=1.0):
    """Replace the blocks of a 5x5 system by the given matrices (scalars mean multiples of I)."""
    I = np.eye(5)
    m = {k: np.asarray(v, float) * I if np.ndim(v) == 0 else np.asarray(v, float)
         for k, v in dict(A=A, B=B, C=C, D=D, E=E).items()}
    return dataclasses.replace(assemble(perturbation_base(), "nash"), T=T, **m)


def test_fixed_point_hand_values():
    r = check_fixed_point(crossing_ia())
    # 4 * 1 * (1 - 0.1) - 0.2^2 on the running part, zero terminal weight
    assert r.details["running"] == pytest.approx(3.56)
    assert r.details["terminal"] == 0.0 and r.holds
    assert not check_fixed_point(crossing_ia().replace(B_1=2.0)).holds
    assert not check_fixed_point(crossing_ia().replace(Fbar_1=2.0, Qbar_1=1.0)).holds


@pytest.mark.parametrize("game", list(GameKind))
def test_fullcond2_matches_direct_formula(game):
    for p in (crossing_ia(), crossing_ib(), perturbation_base()):
        A, B, C, D, E = scalar_blocks(p, game.value)
        run = 4 * np.linalg.eigvalsh((D + D.T) / 2).min() * np.linalg.eigvalsh(B).min() \
            - np.linalg.norm(A.T - C, 2) ** 2
        r = check_fullcond2(assemble(p, game))
        assert r.details["running"] == pytest.approx(run, rel=1e-10, abs=1e-12)
        assert r.details["terminal"] == pytest.approx(np.linalg.eigvalsh(E + E.T).min(), abs=1e-12)


def test_fullcond2_examples():
    assert check_fullcond2(toy(A=0.3, B=1, C=0.3, D=1, E=1)).margin == pytest.approx(2.0)
    r = check_fullcond2(toy(A=0.3, B=1, C=0.3, D=1, E=1))
    assert r.details["running"] == pytest.approx(4.0) and r.holds
    # zero terminal weight fails the strict terminal part
    assert not check_fullcond2(assemble(crossing_ia(), "pareto")).holds
    assert check_fullcond2(assemble(perturbation_base(), "nash")).holds


def test_fullcond3_unverifiable_without_terminal_weight():
    r = check_fullcond3(assemble(crossing_ia(), "nash"))
    assert not r.verifiable and not r.holds and math.isnan(r.margin)


def test_fullcond3_symmetric_weights_and_panel_convergence():
    r = check_fullcond3(toy(A=0.2, B=1, C=0.2, D=1, E=1))
    assert r.details["U"] == 0.0
    # symmetric identity weights: V_T^2 = max over tau of e^{0.4 tau} + (e^{0.4 tau} - 1) / 0.4 is at T
    assert r.details["V_T"] ** 2 == pytest.approx(math.exp(0.4) + (math.exp(0.4) - 1) / 0.4, rel=1e-8)
    sys = assemble(perturbation_base(), "pareto")
    coarse, fine = check_fullcond3(sys, panels=200), check_fullcond3(sys, panels=800)
    assert abs(coarse.margin - fine.margin) < 1e-6


def test_compare_assumption_hand_values():
    d = check_compare_assumption(crossing_ia()).details
    assert d["statement1"] == pytest.approx(0.9)
    assert d["statement2"] == pytest.approx(0.1)
    assert d["statement3"] == pytest.approx(1.0)
    assert d["A_tilde"] == pytest.approx(-1.4)
    assert d["V"] == pytest.approx(-0.5)
    assert d["statement4a"] == pytest.approx(0.9) and d["branch"] == "4a"
    bad = check_compare_assumption(crossing_ia().replace(C_1=0.0, D_1=0.0))
    assert bad.details["statement2"] == 0.0 and not bad.holds


def test_compare_assumption_needs_base_family():
    with pytest.raises(InvalidInputError):
        check_compare_assumption(crossing_ia().replace(M_1=1.0))


def test_norm_bound_examples():
    b = riccati_norm_bound(toy(A=1, B=1, C=1, D=0.01, E=0.01, T=0.5))
    assert b.Lambda == pytest.approx(math.sqrt(0.03))
    assert b.gate == pytest.approx(1 / math.sqrt(0.03))
    assert b.T_max == pytest.approx(math.log(1 / math.sqrt(0.03)) / 2)
    assert b.applicable
    z = riccati_norm_bound(toy(A=1, B=1, C=1, D=0, E=0))
    assert z.Lambda == 0.0 and z.applicable
    assert not riccati_norm_bound(toy(A=1, B=0, C=1, D=1, E=1)).applicable


def test_norm_bound_dominates_solution():
    sys = toy(A=1, B=1, C=1, D=0.01, E=0.01, T=0.8)
    b = riccati_norm_bound(sys)
    assert b.applicable
    G = solve_riccati(sys, TimeGrid.horizon(sys.T, 400)).values
    assert max(np.abs(np.linalg.eigvals(g)).max() for g in G) <= b.Lambda


def test_perturbation_gate_behaviour():
    base = perturbation_base()
    sys0 = assemble(base, "nash")
    G0 = solve_riccati(sys0, TimeGrid.horizon(base.T, 400))
    same = perturbation_gate(G0, sys0, sys0)
    assert same.holds and math.isinf(same.margin)
    E0 = []
    for delta in (0.01, 0.05, 0.1):
        r = perturbation_gate(G0, sys0, assemble(perturb(base, PERTURBATION_PATTERN, delta), "nash"))
        assert math.isfinite(r.details["E0"])
        E0.append(r.details["E0"])
    assert E0[0] > E0[1] > E0[2]
    with pytest.raises(InvalidInputError):
        perturbation_gate(G0, sys0, dataclasses.replace(sys0, layout=dataclasses.replace(sys0.layout,
                                                                                          sizes=(1, 1, 1, 1, 2))))


def test_check_all_lists_every_condition():
    p = perturbation_base()
    names = [r.name for r in check_all(p, {g: assemble(p, g) for g in GameKind}, base_family=True)]
    assert names == ["fixed_point", "fullcond2_nash", "fullcond3_nash", "fullcond2_pareto",
                     "fullcond3_pareto", "compare"]
