"""Follower's optimal cost, optimal feedback controls and the cost-to-go function."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .assembly import assemble, cost_weights
from .matrixops import InvalidInputError, TimeGrid, integrate_initial, simpson
from .model import GameKind, ModelParams, require_base
from .odesolve import (CostPaths, _check_grid, solve_cascade, solve_follower_moments, solve_gamma0,
                       solve_reduced_paths)


@dataclass(frozen=True, eq=False)
class CostReport:
    """Follower's optimal cost split into its additive parts.

    ``quadratic_term`` is the initial quadratic form, ``trace_term`` the
    leaders' noise contribution, ``linear_term`` and ``l0`` the affine
    parts, and ``c`` the follower's idiosyncratic contribution.
    """

    game: GameKind
    J1: float
    quadratic_term: float
    trace_term: float
    linear_term: float
    l0: float
    c: float
    paths: object = None

    @property
    def components(self) -> dict:
        return {"quadratic_term": self.quadratic_term, "trace_term": self.trace_term,
                "linear_term": self.linear_term, "l0": self.l0, "c": self.c}


@dataclass(frozen=True)
class ControlVector:
    t: float
    u1: np.ndarray
    u_alpha: np.ndarray
    u_beta: np.ndarray


def follower_constant(p: ModelParams, gamma0, sigma0, p0) -> tuple[np.ndarray, float]:
    """Running integrand and terminal value of the follower's idiosyncratic cost."""
    S1 = p.E_1 @ np.linalg.solve(p.R_1, p.E_1.T)
    G0 = gamma0.values
    W = np.einsum("nij,jk,nkl->nil", G0, S1, G0) + p.Q_1
    cov = sigma0.values + p0.values
    running = np.einsum("nij,nji->n", W, cov)
    terminal = float(np.trace(p.Qbar_1 @ cov[-1]))
    return running, terminal


@dataclass(frozen=True, eq=False)
class GameSolution:
    """Solved cascade of one game plus the node-wise integrands of the cost."""

    params: ModelParams
    paths: CostPaths
    noise_running: np.ndarray
    follower_running: np.ndarray
    follower_terminal: float

    @property
    def game(self) -> GameKind:
        return self.paths.game

    @property
    def grid(self) -> TimeGrid:
        return self.paths.grid

    def report(self, x0_mean=None, x0_cov=None) -> CostReport:
        """Cost for the given initial moments of the stacked state (defaults from the model)."""
        sys = self.paths.system
        m = sys.x0_mean if x0_mean is None else np.asarray(x0_mean, dtype=float)
        cov = sys.x0_cov if x0_cov is None else np.asarray(x0_cov, dtype=float)
        K0 = self.paths.K.values[0]
        quad = float(m @ K0 @ m + np.trace(K0 @ cov))
        h = self.grid.h
        trace = float(simpson(self.noise_running, h))
        lin = float(2.0 * m @ self.paths.k.values[0])
        l0 = float(self.paths.l.values[0][0])
        c = float(simpson(self.follower_running, h)) + self.follower_terminal
        return CostReport(game=self.game, J1=quad + trace + lin + l0 + c, quadratic_term=quad,
                          trace_term=trace, linear_term=lin, l0=l0, c=c, paths=self.paths)

    def cost_at_eta1(self, mean_eta_1) -> float:
        lay = self.paths.system.layout
        m = np.array(self.paths.system.x0_mean, dtype=float)
        m[lay.slice(2)] = mean_eta_1
        return self.report(x0_mean=m).J1

    def eta1_quadratic(self) -> np.ndarray:
        """Coefficients ``(c0, c1, c2)`` of the cost as a polynomial in a scalar ``E[eta_1]``."""
        lay = self.paths.system.layout
        if lay.sizes[2] != 1:
            raise InvalidInputError("polynomial form needs a scalar follower state")
        base = self.cost_at_eta1(0.0)
        i = lay.slice(2).start
        K0 = self.paths.K.values[0]
        m = np.array(self.paths.system.x0_mean, dtype=float)
        m[i] = 0.0
        c1 = 2.0 * (K0[i] @ m) + 2.0 * self.paths.k.values[0][i]
        return np.array([base, c1, K0[i, i]])


def solve_game(p: ModelParams, game, grid: TimeGrid | None = None, follower=None,
               weights=None) -> GameSolution:
    """Run the full cascade for one game and precompute the cost integrands."""
    game = GameKind.parse(game)
    grid = _check_grid(grid, p.T)
    sys = assemble(p, game)
    weights = cost_weights(p) if weights is None else weights
    if follower is None:
        follower = solve_follower(p, grid)
    paths = solve_cascade(p, sys, weights, grid, follower=follower)
    gamma0, moments = follower
    running, terminal = follower_constant(p, gamma0, moments.Sigma0, moments.P0)
    Sig = sys.Sigma
    noise = np.einsum("ia,nij,ja->n", Sig, paths.K.values, Sig)
    return GameSolution(params=p, paths=paths, noise_running=noise, follower_running=running,
                        follower_terminal=terminal)


def solve_follower(p: ModelParams, grid: TimeGrid | None = None) -> tuple:
    """Game-independent part of the cascade: ``Gamma0`` and the follower moments."""
    grid = _check_grid(grid, p.T)
    gamma0 = solve_gamma0(p, grid)
    return gamma0, solve_follower_moments(p, gamma0)


def _warn_assumptions(p: ModelParams, game: GameKind) -> None:
    from .conditions import check_fixed_point, check_fullcond2

    failed = [r.name for r in (check_fixed_point(p), check_fullcond2(assemble(p, game))) if not r.holds]
    if failed:
        warnings.warn(f"{game.value}: conditions not verified: {', '.join(failed)}", stacklevel=3)


def follower_cost(p: ModelParams, game, grid: TimeGrid | None = None,
                  check_assumptions: bool = True) -> CostReport:
    """Follower's optimal cost under the given game between the leaders.

    Parameters
    ----------
    p : ModelParams
        A valid model.
    game : GameKind or str
        Game played by the leaders.
    grid : TimeGrid, optional
        Time grid on ``[0, T]``; 2000 steps by default.
    check_assumptions : bool
        Warn (without failing) when the well-posedness conditions are not verified.

    Returns
    -------
    CostReport

    Raises
    ------
    FiniteEscapeError
        If a Riccati solution blows up.
    """
    game = GameKind.parse(game)
    if check_assumptions:
        _warn_assumptions(p, game)
    return solve_game(p, game, grid).report()


def follower_cost_b0(p: ModelParams, game, grid: TimeGrid | None = None) -> CostReport:
    """Follower's cost for a unit-scale base-family model from the reduced scalar paths."""
    game = GameKind.parse(game)
    require_base(p, unit=True)
    grid = _check_grid(grid, p.T)
    rp = solve_reduced_paths(p, grid)[game]
    gamma0, moments = solve_follower(p, grid)
    running, terminal = follower_constant(p, gamma0, moments.Sigma0, moments.P0)
    c = float(simpson(running, grid.h)) + terminal

    sc = lambda x: float(np.asarray(x).ravel()[0])  # noqa: E731
    lead = sc(p.mean_eta_alpha) + sc(p.mean_eta_beta)
    lead_sq = lead**2 + sc(p.cov_eta_alpha) + sc(p.cov_eta_beta)
    e1 = sc(p.mean_eta_1)
    K11, K12, K22 = rp.K11.values[0], rp.K12.values[0], rp.K22.values[0]
    quad = K11 * lead_sq + 2.0 * K12 * e1 * lead + K22 * e1**2
    noise = (sc(p.sigma_alpha) ** 2 + sc(p.sigma_beta) ** 2) * float(simpson(rp.K11.values, grid.h))
    return CostReport(game=game, J1=quad + noise + c, quadratic_term=float(quad), trace_term=noise,
                      linear_term=0.0, l0=0.0, c=c, paths=rp)


def optimal_feedback(sol: GameSolution, t: float, state, xhat1) -> ControlVector:
    """Optimal controls of the follower and both leaders at time ``t``.

    ``state`` is the stacked state vector and ``xhat1`` the follower's
    deviation from the mean field.
    """
    paths = sol.paths
    T = paths.grid.t_end
    if not (0.0 <= t <= T):
        raise InvalidInputError(f"t = {t} outside [0, {T}]")
    p = sol.params
    lay = paths.system.layout
    x = np.asarray(state, dtype=float)
    adj = paths.Gamma.at(t) @ x + paths.g.at(t)
    parts = lay.split_adjoint(adj)
    xhat1 = np.atleast_1d(np.asarray(xhat1, dtype=float))
    u1 = -np.linalg.solve(p.R_1, p.E_1.T @ (paths.Gamma0.at(t) @ xhat1 + parts["zeta"]))
    ua = -np.linalg.solve(p.R_alpha, p.D_alpha.T @ parts["p_alpha"])
    ub = -np.linalg.solve(p.R_beta, p.D_beta.T @ parts["p_beta"])
    return ControlVector(t=float(t), u1=u1, u_alpha=ua, u_beta=ub)


def _tail_integral(values: np.ndarray, h: float) -> np.ndarray:
    """``int_{t_i}^T f`` at every node, Simpson-based."""
    rev = values[::-1]
    cum = scipy.integrate.cumulative_simpson(rev, dx=h, axis=0, initial=0.0)
    return cum[::-1]


def cost_to_go_curve(sol: GameSolution) -> np.ndarray:
    """Expected remaining cost on ``[t, T]`` at every grid node under the fixed optimal feedback.

    State moments are propagated forward from the initial data; the value
    function coefficients are those of the full-horizon solution.
    """
    paths = sol.paths
    sys = paths.system
    A, B, Sig = sys.A, sys.B, sys.Sigma
    SS = Sig @ Sig.T
    gamma, g = paths.Gamma, paths.g
    n = sys.size

    def rhs(t, y):
        m, V = y[:n], y[n:].reshape(n, n)
        phi = A - B @ gamma.at(t)
        PV = phi @ V
        return np.concatenate([phi @ m - B @ g.at(t), (PV + PV.T + SS).ravel()])

    y0 = np.concatenate([sys.x0_mean, sys.x0_cov.ravel()])
    mom = integrate_initial(rhs, y0, paths.grid)
    m = mom.values[:, :n]
    V = mom.values[:, n:].reshape(-1, n, n)
    K = paths.K.values
    h = paths.grid.h
    quad = np.einsum("ni,nij,nj->n", m, K, m) + np.einsum("nij,nji->n", K, V)
    lin = 2.0 * np.einsum("ni,ni->n", m, paths.k.values)
    l = paths.l.values[:, 0]
    noise = _tail_integral(sol.noise_running, h)
    c = _tail_integral(sol.follower_running, h) + sol.follower_terminal
    return quad + lin + l + noise + c


def cost_to_go(p: ModelParams, game, t: float, grid: TimeGrid | None = None) -> float:
    """Expected remaining follower cost on ``[t, T]`` (interpolated between grid nodes)."""
    sol = solve_game(p, game, grid)
    T = sol.grid.t_end
    if not (0.0 <= t <= T):
        raise InvalidInputError(f"t = {t} outside [0, {T}]")
    curve = cost_to_go_curve(sol)
    return float(np.interp(t, sol.grid.nodes, curve))
