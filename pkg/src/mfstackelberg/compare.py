"""Nash-versus-Pareto comparison: cost difference, crossing threshold, regimes and perturbation sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .cost import GameSolution, solve_follower, solve_game
from .fixtures import perturb, validate_pattern
from .matrixops import InvalidInputError, TimeGrid
from .model import GameKind, ModelParams, base_scale_factor, reduce_to_unit_k
from .odesolve import _check_grid

REGIMES = ("case1", "case2", "case3", "case4", "unclassified")


class ModelNotAffineError(ArithmeticError):
    """Raised when the cost difference is not affine in the follower's initial mean."""


class NoCrossingError(ArithmeticError):
    """Raised when the cost difference does not change sign in the follower's initial mean."""


@dataclass(frozen=True)
class ComparisonReport:
    """Follower's cost under both games, their difference and, for base models, the regime."""

    J_N: float
    J_P: float
    diff: float
    affine: tuple | None = None
    threshold_L: float | None = None
    eta1_star: float | None = None
    regime: str | None = None


@dataclass(frozen=True)
class ThresholdReport:
    """Crossing point of the cost difference.

    ``eta1_star`` is the crossing value of ``E[eta_1]``; ``product`` is
    ``eta1_star * E[eta_alpha + k eta_beta]``, the scale-free form, and
    ``L`` is its magnitude under the sign convention of ``regime``.
    """

    eta1_star: float
    leader_sum: float
    product: float
    L: float
    regime: str
    a: float
    b: float


@dataclass(frozen=True)
class SweepRow:
    eta1: float
    deltaJ0: float
    delta0: float
    censored: bool = False


def _pair(p: ModelParams, grid: TimeGrid | None, follower=None) -> tuple[GameSolution, GameSolution]:
    grid = _check_grid(grid, p.T)
    if follower is None:
        follower = solve_follower(p, grid)
    return (solve_game(p, GameKind.NASH, grid, follower=follower),
            solve_game(p, GameKind.PARETO, grid, follower=follower))


def diff_polynomial(p: ModelParams, grid: TimeGrid | None = None, follower=None) -> np.ndarray:
    """Coefficients ``(c0, c1, c2)`` of ``J_N - J_P`` as a polynomial in scalar ``E[eta_1]``."""
    nash, pareto = _pair(p, grid, follower)
    return nash.eta1_quadratic() - pareto.eta1_quadratic()


def _leader_sum(p: ModelParams) -> float:
    k = base_scale_factor(p, tol=1e-9)
    k = 1.0 if k is None else k
    return float(p.mean_eta_alpha.sum() + k * p.mean_eta_beta.sum())


def compare_games(p: ModelParams, grid: TimeGrid | None = None) -> ComparisonReport:
    """Follower's cost under both games and, for base-family models, the crossing threshold."""
    nash, pareto = _pair(p, grid)
    JN, JP = nash.report().J1, pareto.report().J1
    if base_scale_factor(p, tol=1e-9) is None or not p.is_scalar:
        return ComparisonReport(J_N=JN, J_P=JP, diff=JN - JP)
    regime = classify_regime(p)
    poly = nash.eta1_quadratic() - pareto.eta1_quadratic()
    try:
        a, b = _affine_from_poly(poly)
        th = _threshold_from_affine(p, a, b, regime)
    except (ModelNotAffineError, NoCrossingError):
        return ComparisonReport(J_N=JN, J_P=JP, diff=JN - JP, regime=regime)
    return ComparisonReport(J_N=JN, J_P=JP, diff=JN - JP, affine=(a, b), threshold_L=th.L,
                            eta1_star=th.eta1_star, regime=regime)


def _affine_from_poly(poly, tol: float = 1e-6) -> tuple[float, float]:
    d = lambda x: poly[0] + poly[1] * x + poly[2] * x * x  # noqa: E731
    d0, d1 = d(0.0), d(1.0)
    a, b = d1 - d0, d0
    # third point off the two-point line
    x3 = -2.0
    resid = abs(d(x3) - (a * x3 + b))
    if resid > tol * max(1.0, abs(d(x3))):
        raise ModelNotAffineError(f"cost difference is not affine (residual {resid:.3g})")
    return float(a), float(b)


def affine_coefficients(p: ModelParams, grid: TimeGrid | None = None) -> tuple[float, float]:
    """``(a, b)`` with ``J_N - J_P = a E[eta_1] + b``, verified at a third point.

    Raises
    ------
    ModelNotAffineError
        If the third point is off the line by more than ``1e-6`` relative.
    """
    return _affine_from_poly(diff_polynomial(p, grid))


def _threshold_from_affine(p: ModelParams, a: float, b: float, regime: str) -> ThresholdReport:
    if a == 0.0 or abs(a) <= 1e-14 * max(1.0, abs(b)):
        raise NoCrossingError("cost difference does not depend on E[eta_1]")
    eta = -b / a
    s = _leader_sum(p)
    product = eta * s
    if regime in ("case1", "case3"):
        L = -product
    elif regime in ("case2", "case4"):
        L = product
    else:
        L = abs(product)
    return ThresholdReport(eta1_star=float(eta), leader_sum=s, product=float(product), L=float(L),
                           regime=regime, a=a, b=b)


def threshold_L(p: ModelParams, grid: TimeGrid | None = None) -> ThresholdReport:
    """Crossing value of ``E[eta_1]`` where both games cost the follower the same.

    Raises
    ------
    NoCrossingError
        If the affine slope vanishes.
    """
    a, b = affine_coefficients(p, grid)
    return _threshold_from_affine(p, a, b, classify_regime(p))


def threshold_bisect(p: ModelParams, bracket=(-50.0, 50.0), tol: float = 1e-8,
                     grid: TimeGrid | None = None) -> float:
    """Crossing value found by root bracketing on ``E[eta_1]`` (cross-check of :func:`threshold_L`)."""
    poly = diff_polynomial(p, grid)
    f = lambda x: poly[0] + poly[1] * x + poly[2] * x * x  # noqa: E731
    lo, hi = bracket
    if f(lo) * f(hi) > 0:
        raise NoCrossingError(f"no sign change on [{lo}, {hi}]")
    return float(scipy.optimize.brentq(f, lo, hi, xtol=tol))


def classify_regime(p: ModelParams) -> str:
    """Match the sign pattern of a base-family model against the four comparison regimes.

    A terminal leader coupling whose terminal weight is zero has no effect
    and is not required to carry a sign.
    """
    k = base_scale_factor(p, tol=1e-9)
    if k is None or not p.is_scalar:
        return "unclassified"
    s = {n: float(getattr(p, n).ravel()[0]) for n in (
        "B_alpha", "A_beta", "G_alpha", "G_beta", "Gbar_alpha", "Gbar_beta", "Qbar_alpha", "Qbar_beta",
        "C_1", "G_1", "Gbar_1")}

    def term(sign):
        # sign: +1 means > 0, -1 means < 0
        return all(sign * s[g] > 0 or s[q] == 0 for g, q in (("Gbar_alpha", "Qbar_alpha"),
                                                               ("Gbar_beta", "Qbar_beta")))

    aligned = s["B_alpha"] > 0 and s["A_beta"] > 0 and s["G_alpha"] < 0 and s["G_beta"] < 0 and term(-1)
    conflict = s["B_alpha"] < 0 and s["A_beta"] < 0 and s["G_alpha"] > 0 and s["G_beta"] > 0 and term(+1)
    follower_pos = s["C_1"] > 0 and s["G_1"] < 0 and s["Gbar_1"] <= 0
    follower_neg = s["C_1"] < 0 and s["G_1"] > 0 and s["Gbar_1"] >= 0
    if aligned and follower_pos:
        return "case1"
    if aligned and follower_neg:
        return "case2"
    if conflict and follower_pos:
        return "case3"
    if conflict and follower_neg:
        return "case4"
    return "unclassified"


def delta0_sweep(base: ModelParams, pattern: dict, eta1_values, delta_max: float = 1.0,
                 tol: float = 1e-4, grid: TimeGrid | None = None, prescan: int = 64,
                 progress=None) -> list[SweepRow]:
    """Smallest ``|delta|`` along ``pattern`` at which the sign of ``J_N - J_P`` flips.

    Both signs of ``delta`` are searched.  A ``prescan``-point grid on
    ``[-delta_max, delta_max]`` locates the first flip on each side and a
    bracketed root search refines it to ``tol``.  Rows with no flip are
    returned censored with ``delta0 = delta_max``.
    """
    pattern = validate_pattern(pattern)
    if not base.is_scalar:
        raise InvalidInputError("the sweep needs a scalar follower state")
    grid = _check_grid(grid, base.T)
    eta1_values = np.asarray(list(eta1_values), dtype=float)
    follower_slots = {"A_1", "E_1", "R_1", "Q_1", "Qbar_1", "sigma_1"}
    shared = None if follower_slots & set(pattern) else solve_follower(base, grid)
    cache: dict = {}

    def poly(delta: float) -> np.ndarray:
        key = float(delta)
        if key not in cache:
            p = perturb(base, pattern, key) if key != 0.0 else base
            cache[key] = diff_polynomial(p, grid, follower=shared)
            if progress is not None:
                progress(key)
        return cache[key]

    def diff(delta, eta):
        c = poly(delta)
        return c[0] + c[1] * eta + c[2] * eta * eta

    n_side = max(prescan // 2, 1)
    pos = np.linspace(0.0, delta_max, n_side + 1)[1:]
    for d in np.concatenate([pos, -pos]):
        poly(d)

    rows = []
    for eta in eta1_values:
        d0 = diff(0.0, eta)
        if d0 == 0:
            rows.append(SweepRow(float(eta), 0.0, 0.0))
            continue
        best = math.inf
        for side in (pos, -pos):
            prev = 0.0
            for d in side:
                if np.sign(diff(d, eta)) != np.sign(d0):
                    root = scipy.optimize.brentq(lambda x: diff(x, eta), prev, d, xtol=tol)
                    best = min(best, abs(root))
                    break
                prev = d
        if math.isinf(best):
            rows.append(SweepRow(float(eta), float(abs(d0)), float(delta_max), censored=True))
        else:
            rows.append(SweepRow(float(eta), float(abs(d0)), float(best)))
    return rows


def loglog_regression(rows: list[SweepRow]) -> dict:
    """Least-squares fit of ``log deltaJ0 = slope * log delta0 + intercept`` over uncensored rows."""
    pts = [(r.delta0, r.deltaJ0) for r in rows if not r.censored and r.delta0 > 0 and r.deltaJ0 > 0]
    if len(pts) < 2:
        raise InvalidInputError("need at least two uncensored rows for a regression")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    fit = np.polynomial.polynomial.Polynomial.fit(x, y, 1).convert()
    intercept, slope = fit.coef
    pred = intercept + slope * x
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "n": len(pts)}


def unit_scale_threshold(p: ModelParams, grid: TimeGrid | None = None) -> ThresholdReport:
    """Threshold computed on the equivalent unit-scale model (must agree with :func:`threshold_L`)."""
    return threshold_L(reduce_to_unit_k(p), grid)
