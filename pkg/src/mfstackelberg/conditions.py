"""Checkable well-posedness and comparison conditions, with signed margins."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from .assembly import AssembledSystem
from .matrixops import InvalidInputError, Path, lambda_min_sym, matrix_exp, spectral_norm
from .model import ModelParams, require_base, rescale_beta


@dataclass(frozen=True)
class ConditionResult:
    """Outcome of one condition.

    ``margin`` is the smallest signed slack over the sub-inequalities
    (positive means satisfied); ``details`` holds each sub-margin.  When
    ``verifiable`` is false the condition could not be evaluated and
    ``holds`` is false.
    """

    name: str
    holds: bool
    margin: float
    details: dict = field(default_factory=dict)
    verifiable: bool = True


@dataclass(frozen=True)
class NormBound:
    """A-priori bound on the Riccati solution and the horizon on which it applies."""

    Lambda: float
    T_max: float
    gate: float
    applicable: bool


def _sym(m):
    return 0.5 * (m + m.T)


def check_fixed_point(p: ModelParams) -> ConditionResult:
    """Condition under which the follower's mean-field fixed point is well posed."""
    n1 = p.A_1.shape[0]
    I = np.eye(n1)
    S1 = p.E_1 @ np.linalg.solve(p.R_1, p.E_1.T)
    lhs = spectral_norm(p.B_1) ** 2
    rhs = 4.0 * lambda_min_sym(p.Q_1 @ (I - p.F_1)) * lambda_min_sym(S1)
    running = rhs - lhs
    QF = p.Qbar_1 @ (I - p.Fbar_1)
    terminal = lambda_min_sym(QF + QF.T)
    holds = running > 0 and terminal >= 0
    return ConditionResult("fixed_point", bool(holds), float(min(running, terminal)),
                           {"running": float(running), "terminal": float(terminal)})


def check_fullcond2(sys: AssembledSystem) -> ConditionResult:
    """Spectral condition guaranteeing a global solution of the leaders' Riccati equation."""
    running = (4.0 * lambda_min_sym(sys.D) * lambda_min_sym(sys.B)
               - spectral_norm(sys.A.T - sys.C) ** 2)
    terminal = lambda_min_sym(sys.E + sys.E.T)
    holds = running > 0 and terminal > 0
    return ConditionResult(f"fullcond2_{sys.game.value}", bool(holds), float(min(running, terminal)),
                           {"running": float(running), "terminal": float(terminal)})


def _inv_sqrt(m):
    w, v = np.linalg.eigh(m)
    return (v / np.sqrt(w)) @ v.T


def check_fullcond3(sys: AssembledSystem, panels: int = 200) -> ConditionResult:
    """Small-horizon condition using the symmetric/antisymmetric split of the weights.

    The time integral is evaluated by composite Simpson on ``panels``
    intervals and the supremum over start times is taken on the same nodes.
    """
    name = f"fullcond3_{sys.game.value}"
    Q, S = _sym(sys.D), 0.5 * (sys.D - sys.D.T)
    Qb, Sb = _sym(sys.E), 0.5 * (sys.E - sys.E.T)
    lq, lqb = lambda_min_sym(Q), lambda_min_sym(Qb)
    if lq <= 0 or lqb <= 0:
        return ConditionResult(name, False, float("nan"),
                               {"lambda_min_Q": lq, "lambda_min_Qbar": lqb}, verifiable=False)
    Q_is, Qb_is = _inv_sqrt(Q), _inv_sqrt(Qb)
    Q_s, Qb_s = scipy.linalg.sqrtm(Q).real, scipy.linalg.sqrtm(Qb).real
    U = max(spectral_norm(Qb_is @ Sb @ Qb_is), spectral_norm(Q_is @ S @ Q_is))

    T = sys.T
    taus = np.linspace(0.0, T, panels + 1)
    h = T / panels
    # the transpose of exp(C^T tau) is exp(C tau)
    phis = [matrix_exp(sys.C, tau) for tau in taus]
    run = np.array([spectral_norm(ph @ Q_s) ** 2 for ph in phis])
    term = np.array([spectral_norm(ph @ Qb_s) ** 2 for ph in phis])
    cum = scipy.integrate.cumulative_simpson(run, dx=h, initial=0.0)
    # start time t corresponds to tau = T - t for both pieces
    V_T = math.sqrt(float(np.max(term + cum)))
    lhs = 1.0 + math.sqrt(T) * V_T * spectral_norm((sys.A - sys.C.T) @ Q_is)
    rhs = 2.0 / (1.0 + U)
    margin = rhs - lhs
    return ConditionResult(name, bool(margin > 0), float(margin),
                           {"V_T": V_T, "U": float(U), "lhs": float(lhs), "rhs": float(rhs)})


def check_compare_assumption(p: ModelParams) -> ConditionResult:
    """Technical condition behind the Nash/Pareto comparison for base-family models.

    Statements on individual coefficients are checked on ``p`` itself;
    the combined constants use the equivalent unit-scale model.
    """
    k = require_base(p)
    if not p.is_scalar:
        raise InvalidInputError("comparison condition needs scalar dimensions")
    u = rescale_beta(p, k) if abs(k - 1.0) > 1e-15 else p
    sc = lambda m, name: float(getattr(m, name).ravel()[0])  # noqa: E731
    A1, B1, C1, E1 = sc(u, "A_1"), sc(u, "B_1"), sc(u, "C_1"), sc(u, "E_1")
    Q1, R1, F1, G1 = sc(u, "Q_1"), sc(u, "R_1"), sc(u, "F_1"), sc(u, "G_1")
    Qb1, Fb1, Gb1 = sc(u, "Qbar_1"), sc(u, "Fbar_1"), sc(u, "Gbar_1")
    A_tilde = A1 + sc(u, "A_alpha") + sc(u, "B_alpha")
    root = math.sqrt((2 * A1 + B1) ** 2 + 4 * E1**2 * Q1 * (1 - F1) / R1)
    U = max(R1 / (2 * E1**2) * (root + 2 * A1 + B1), (1 - Fb1) * Qb1)
    V = Q1 * G1 * E1**2 / R1
    Vb = Qb1 * Gb1 * E1**2 / R1

    s1 = 1.0 - max(sc(p, "F_1"), min(sc(p, "G_1"), sc(p, "H_1")), sc(p, "Fbar_1"),
                   min(sc(p, "Gbar_1"), sc(p, "Hbar_1")))
    s2 = min(1.0 - min(sc(p, "G_alpha"), sc(p, "G_beta")),
             1.0 - min(sc(p, "Gbar_alpha"), sc(p, "Gbar_beta")), abs(C1))
    s3 = Vb + 1.0
    s4a = V - A_tilde
    verifiable = True
    if math.isclose(A_tilde, U, rel_tol=1e-12, abs_tol=1e-14):
        den = abs(C1 * U - V)
        bound = math.inf if den == 0 else abs(C1 + Vb) / den
    elif math.isclose(C1 * A_tilde, V, rel_tol=1e-12, abs_tol=1e-14):
        bound, verifiable = math.nan, False
    else:
        num = abs(C1 * U + Vb * (U - A_tilde) - V)
        log_num = -math.inf if num == 0 else math.log(num)
        bound = abs(log_num - math.log(abs(C1 * A_tilde - V))) / abs(U - A_tilde)
    s4b = bound - p.T if verifiable else math.nan

    cond4 = s4a >= 0 or (verifiable and s4b > 0)
    holds = s1 > 0 and s2 > 0 and s3 > 0 and cond4
    branch = "4a" if s4a >= 0 else ("4b" if verifiable and s4b > 0 else None)
    s4 = max(s4a, s4b) if verifiable else s4a
    details = {"statement1": s1, "statement2": s2, "statement3": s3, "statement4a": s4a,
               "statement4b": s4b, "T_bound": bound, "branch": branch,
               "A_tilde": A_tilde, "U": U, "V": V, "Vbar": Vb}
    return ConditionResult("compare", bool(holds), float(min(s1, s2, s3, s4)), details,
                           verifiable=verifiable or s4a >= 0)


def riccati_norm_bound(sys: AssembledSystem) -> NormBound:
    """Explicit bound on the Riccati solution and the horizon on which it holds."""
    rA, rB, rC = spectral_norm(sys.A), spectral_norm(sys.B), spectral_norm(sys.C)
    rD, rE = spectral_norm(sys.D), spectral_norm(sys.E)
    if rB == 0:
        return NormBound(Lambda=math.inf, T_max=0.0, gate=math.nan, applicable=False)
    inner = rD + rE * (rA + rC)
    Lam = math.sqrt(inner / rB)
    if inner == 0:
        return NormBound(Lambda=0.0, T_max=math.inf, gate=math.inf, applicable=True)
    gate = (rA + rC) / (2.0 * math.sqrt(rB * inner))
    if gate <= 1:
        return NormBound(Lambda=Lam, T_max=0.0, gate=gate, applicable=False)
    T_max = math.log(gate) / (rA + rC)
    return NormBound(Lambda=Lam, T_max=T_max, gate=gate, applicable=bool(sys.T <= T_max))


def _sup_norm(values) -> float:
    return float(max(spectral_norm(v) for v in values))


def perturbation_gate(gamma0: Path, base: AssembledSystem, perturbed: AssembledSystem,
                      T: float | None = None) -> ConditionResult:
    """Admissibility of a perturbation around a base model with solved Riccati path ``gamma0``.

    Sup-norms in time are taken over the grid nodes of ``gamma0``.
    """
    if base.size != perturbed.size or gamma0.values.shape[1:] != (base.size, base.size):
        raise InvalidInputError("base, perturbed and path dimensions differ")
    T = perturbed.T if T is None else float(T)
    A, B, C = perturbed.A, perturbed.B, perturbed.C
    dA, dC, dE = A - base.A, C - base.C, perturbed.E - base.E
    G = gamma0.values
    X = _sup_norm(A - B @ G) + _sup_norm(C - G @ B)
    inner = _sup_norm(G @ dA + dC @ G) + spectral_norm(dE) * X
    rB = spectral_norm(B)
    if inner == 0:
        E0 = math.inf
    elif rB == 0:
        E0 = math.nan
    else:
        E0 = X / (2.0 * math.sqrt(rB)) / math.sqrt(inner)
    if math.isnan(E0):
        return ConditionResult("perturbation", False, math.nan, {"E0": E0}, verifiable=False)
    if math.isinf(E0):
        return ConditionResult("perturbation", True, math.inf, {"E0": E0, "T_bound": math.inf})
    T_bound = math.log(E0) / X if E0 > 0 and X > 0 else -math.inf
    gate_margin = E0 - 1.0
    t_margin = T_bound - T
    holds = gate_margin > 0 and t_margin >= 0
    return ConditionResult("perturbation", bool(holds), float(min(gate_margin, t_margin)),
                           {"E0": E0, "T_bound": T_bound, "gate": gate_margin, "horizon": t_margin})


def check_all(p: ModelParams, systems: dict, base_family: bool) -> list[ConditionResult]:
    """Every condition that applies to ``p``; ``systems`` maps game kinds to assembled systems."""
    out = [check_fixed_point(p)]
    for sys in systems.values():
        out.append(check_fullcond2(sys))
        out.append(check_fullcond3(sys))
    if base_family:
        out.append(check_compare_assumption(p))
    return out
