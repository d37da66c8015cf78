"""Riccati, Lyapunov and moment ODEs that make up the solution cascade."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import AssembledSystem, CostWeights, assemble_reduced
from .matrixops import (BlowUpError, InvalidInputError, Path, TimeGrid, integrate_initial,
                        integrate_terminal, matrix_exp, quadrature_terminal)
from .model import GameKind, ModelParams

DEFAULT_STEPS = 2000

# A Riccati blow-up is a finite escape time of the solution.
FiniteEscapeError = BlowUpError


class NotRepresentableError(ArithmeticError):
    """Raised when the exponential representation of a Riccati solution is singular."""

    def __init__(self, time: float):
        self.time = float(time)
        super().__init__(f"exponential representation is singular at t = {self.time:.6g}")


@dataclass(frozen=True)
class RiccatiPath(Path):
    """Solution of the leaders' non-symmetric Riccati equation on a grid."""

    game: GameKind = field(default=GameKind.NASH)


def default_grid(T: float, steps: int = DEFAULT_STEPS) -> TimeGrid:
    return TimeGrid.horizon(T, steps)


def _check_grid(grid: TimeGrid, T: float) -> TimeGrid:
    if grid is None:
        return default_grid(T)
    if abs(grid.t_start) > 1e-12 or abs(grid.t_end - T) > 1e-12 * max(1.0, T):
        raise InvalidInputError(f"grid must span [0, {T}], got [{grid.t_start}, {grid.t_end}]")
    return grid


def solve_riccati(sys: AssembledSystem, grid: TimeGrid | None = None) -> RiccatiPath:
    """Integrate ``-G' = G A + C G - G B G + D``, ``G(T) = E`` backward by RK4.

    Raises
    ------
    FiniteEscapeError
        If the solution leaves the finite range; ``.time`` is the escape time.
    """
    grid = _check_grid(grid, sys.T)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D

    def rhs(t, G):
        GB = G @ B
        return G @ A + C @ G - GB @ G + D

    path = integrate_terminal(rhs, sys.E, grid)
    return RiccatiPath(path.grid, path.values, path.derivs, game=sys.game)


def hamiltonian(sys: AssembledSystem) -> np.ndarray:
    """Block matrix whose exponential propagates the linear state/adjoint pair."""
    return np.block([[sys.A, -sys.B], [-sys.D, -sys.C]])


def solve_riccati_exp_oracle(sys: AssembledSystem, grid: TimeGrid | None = None,
                             cond_limit: float = 1e12) -> RiccatiPath:
    """Riccati solution from the exponential of the Hamiltonian block matrix.

    Independent of the time stepper; used as a cross-check oracle.

    Raises
    ------
    NotRepresentableError
        If the left factor is numerically singular at some node.
    """
    grid = _check_grid(grid, sys.T)
    n = sys.size
    H = hamiltonian(sys)
    E = sys.E
    values = np.empty((grid.steps + 1, n, n))
    derivs = np.empty_like(values)
    for i, t in enumerate(grid.nodes):
        phi = matrix_exp(H, sys.T - t)
        left = E @ phi[:n, n:] - phi[n:, n:]
        right = E @ phi[:n, :n] - phi[n:, :n]
        # measured against the whole block so a uniformly shrinking factor is caught
        scale = np.linalg.norm(np.hstack([left, right]), 2)
        smin = np.linalg.svd(left, compute_uv=False)[-1]
        if not smin * cond_limit > scale:
            raise NotRepresentableError(t)
        G = -np.linalg.solve(left, right)
        values[i] = G
        derivs[i] = -(G @ sys.A + sys.C @ G - G @ sys.B @ G + sys.D)
    values[-1] = E
    return RiccatiPath(grid, values, derivs, game=sys.game)


def riccati_residual(sys: AssembledSystem, gamma: Path) -> float:
    """Max residual of the Riccati equation at interior nodes using centered differences."""
    v, h = gamma.values, gamma.grid.h
    dG = (v[2:] - v[:-2]) / (2.0 * h)
    G = v[1:-1]
    res = dG + G @ sys.A + sys.C @ G - G @ sys.B @ G + sys.D
    return float(np.max(np.abs(res), initial=0.0))


def solve_offset(sys: AssembledSystem, gamma: Path) -> Path:
    """Integrate ``-g' = (C - Gamma B) g + M``, ``g(T) = h``."""
    C, B, M = sys.C, sys.B, sys.M
    if not (np.any(M) or np.any(sys.h)):
        # homogeneous linear equation with zero terminal value
        return _zero_path(gamma.grid, sys.size)
    return integrate_terminal(lambda t, g: (C - gamma.at(t) @ B) @ g + M, sys.h, gamma.grid)


def _zero_path(grid: TimeGrid, n: int) -> Path:
    z = np.zeros((grid.steps + 1, n))
    return Path(grid, z, z.copy())


def _s1(p: ModelParams) -> np.ndarray:
    return p.E_1 @ np.linalg.solve(p.R_1, p.E_1.T)


def solve_gamma0(p: ModelParams, grid: TimeGrid | None = None) -> Path:
    """Follower's own symmetric Riccati ``-G0' = A1'G0 + G0 A1 - G0 S1 G0 + Q1``."""
    grid = _check_grid(grid, p.T)
    A1, Q1, S1 = p.A_1, p.Q_1, _s1(p)
    return integrate_terminal(lambda t, G: A1.T @ G + G @ A1 - G @ S1 @ G + Q1, p.Qbar_1, grid,
                              symmetrize=True)


@dataclass(frozen=True)
class FollowerMoments:
    """Covariances of the follower's idiosyncratic deviation from the mean field."""

    Sigma0: Path
    P0: Path
    Abar1: Path


def solve_follower_moments(p: ModelParams, gamma0: Path) -> FollowerMoments:
    """Forward Lyapunov ODEs driven by the closed-loop follower matrix ``A1 - S1 G0``.

    ``Sigma0`` collects the follower's own noise from zero initial covariance;
    ``P0`` transports the initial covariance of ``eta_1``.
    """
    A1, S1 = p.A_1, _s1(p)
    ss = p.sigma_1 @ p.sigma_1.T

    def abar(t):
        return A1 - S1 @ gamma0.at(t)

    def sig_rhs(t, X):
        Ab = abar(t)
        return Ab @ X + X @ Ab.T + ss

    def p_rhs(t, X):
        Ab = abar(t)
        return Ab @ X + X @ Ab.T

    grid = gamma0.grid
    sigma0 = integrate_initial(sig_rhs, np.zeros_like(A1), grid, symmetrize=True)
    p0 = integrate_initial(p_rhs, p.cov_eta_1, grid, symmetrize=True)
    abar_path = Path(grid, A1 - S1 @ gamma0.values, -(S1 @ gamma0.derivs))
    return FollowerMoments(sigma0, p0, abar_path)


def solve_lyapunov_K(sys: AssembledSystem, weights: CostWeights, gamma: Path) -> Path:
    """Integrate ``-K' = Q + K Phi + Phi' K + R(t)``, ``K(T) = Qbar``, with ``Phi = A - B Gamma``."""
    A, B, Q = sys.A, sys.B, weights.Q_bold

    def rhs(t, K):
        G = gamma.at(t)
        phi = A - B @ G
        KP = K @ phi
        return Q + KP + KP.T + weights.R_of_t(G)

    return integrate_terminal(rhs, weights.Qbar_bold, gamma.grid, symmetrize=True)


def solve_k_l(sys: AssembledSystem, weights: CostWeights, gamma: Path, g: Path, K: Path) -> tuple[Path, Path]:
    """Linear and constant coefficients of the follower's value along the stacked state."""
    A, B, S1, i3 = sys.A, sys.B, weights.S1, weights.i3
    i3S1i3 = i3 @ S1 @ i3.T
    g_zero = not np.any(g.values)
    if g_zero and not (np.any(weights.qQM) or np.any(weights.qbarQM)):
        k = _zero_path(gamma.grid, sys.size)
        times = gamma.grid.nodes
        l_vals = (weights.MQMbar + weights.MQM * (gamma.grid.t_end - times))[:, None]
        return k, Path(gamma.grid, l_vals, np.full_like(l_vals, -weights.MQM))

    def k_rhs(t, k):
        G, gv = gamma.at(t), g.at(t)
        phi = A - B @ G
        return -weights.qQM + phi.T @ k - K.at(t) @ (B @ gv) + G.T @ (i3S1i3 @ gv)

    k = integrate_terminal(k_rhs, -weights.qbarQM, gamma.grid)

    def l_rate(kv, gv):
        Bg = gv @ B.T
        return (-2.0 * np.einsum("ni,ni->n", kv, Bg) + weights.MQM
                + np.einsum("ni,ij,nj->n", gv, i3S1i3, gv))[:, None]

    # l has a state-independent rate, so RK4 collapses to Simpson's rule per step
    l = quadrature_terminal(l_rate(k.values, g.values), l_rate(k._mid, g._mid),
                            np.atleast_1d(weights.MQMbar), gamma.grid)
    return k, l


@dataclass(frozen=True, eq=False)
class CostPaths:
    """Every path needed to evaluate the follower's optimal cost for one game."""

    system: AssembledSystem
    weights: CostWeights
    Gamma: RiccatiPath
    g: Path
    Gamma0: Path
    Sigma0: Path
    P0: Path
    Abar1: Path
    K: Path
    k: Path
    l: Path

    @property
    def grid(self) -> TimeGrid:
        return self.Gamma.grid

    @property
    def game(self) -> GameKind:
        return self.system.game


def solve_cascade(p: ModelParams, sys: AssembledSystem, weights: CostWeights,
                  grid: TimeGrid | None = None, follower: tuple | None = None) -> CostPaths:
    """Run every solve in dependency order.

    ``follower`` may carry a precomputed ``(Gamma0, FollowerMoments)`` pair, which
    does not depend on the game kind.
    """
    grid = _check_grid(grid, p.T)
    gamma = solve_riccati(sys, grid)
    g = solve_offset(sys, gamma)
    if follower is None:
        gamma0 = solve_gamma0(p, grid)
        moments = solve_follower_moments(p, gamma0)
    else:
        gamma0, moments = follower
    K = solve_lyapunov_K(sys, weights, gamma)
    k, l = solve_k_l(sys, weights, gamma, g, K)
    return CostPaths(system=sys, weights=weights, Gamma=gamma, g=g, Gamma0=gamma0,
                     Sigma0=moments.Sigma0, P0=moments.P0, Abar1=moments.Abar1, K=K, k=k, l=l)


@dataclass(frozen=True)
class ReducedGamePaths:
    """Scalar paths of the reduced base-family system for one game kind.

    ``Gamma_ab`` is the row sum of the leader block, ``Gamma21`` the common
    mean-field/leader entry, ``Gamma22`` the mean-field diagonal entry and
    ``psi = C_1 - s1 Gamma21`` the closed-loop leader-to-mean-field coupling.
    """

    game: GameKind
    Gamma_ab: Path
    Gamma21: Path
    Gamma22: Path
    psi: Path
    K11: Path
    K12: Path
    K22: Path
    psi_residual: float


@dataclass(frozen=True)
class ReducedPaths:
    nash: ReducedGamePaths
    pareto: ReducedGamePaths

    def __getitem__(self, game) -> ReducedGamePaths:
        return self.nash if GameKind.parse(game) is GameKind.NASH else self.pareto

    @property
    def Gamma22(self) -> Path:
        return self.nash.Gamma22

    @property
    def K22(self) -> Path:
        return self.nash.K22


def _component(path: Path, i: int) -> Path:
    return Path(path.grid, path.values[:, i].copy(), path.derivs[:, i].copy())


def _solve_reduced_game(p: ModelParams, game: GameKind, grid: TimeGrid) -> ReducedGamePaths:
    rs = assemble_reduced(p, game)
    sc = lambda name: float(getattr(p, name).ravel()[0])  # noqa: E731
    A1, B1, c = sc("A_1"), sc("B_1"), sc("C_1")
    Q1, F1, G1 = sc("Q_1"), sc("F_1"), sc("G_1")
    Qb1, Fb1, Gb1 = sc("Qbar_1"), sc("Fbar_1"), sc("Gbar_1")
    a, b, s, s1, At = rs.a, rs.b, rs.s, rs.s1, rs.A_tilde
    coop = 1.0 if game is GameKind.PARETO else 0.0
    lead_w = rs.Q * (1 - rs.G) * (1 - coop * rs.G)
    lead_wT = rs.Qbar * (1 - rs.Gbar) * (1 - coop * rs.Gbar)
    V = Q1 * G1 * s1

    def rhs(t, y):
        gab, g21, g22, k22, k12, k11 = y
        psi = c - s1 * g21
        return np.array([
            (2 * a + (1 + coop) * b) * gab - s * gab**2 + lead_w,
            (At - s * gab - s1 * g22) * g21 + c * g22 - Q1 * G1,
            (2 * A1 + B1) * g22 - s1 * g22**2 + Q1 * (1 - F1),
            Q1 * (1 - F1) ** 2 + 2 * k22 * (A1 + B1 - s1 * g22) + s1 * g22**2,
            k12 * (At + B1 - s1 * g22 - s * gab) + psi * k22 + s1 * g21 * g22 - Q1 * (1 - F1) * G1,
            2 * k11 * (a + b - s * gab) + 2 * psi * k12 + s1 * g21**2 + G1**2 * Q1,
        ])

    terminal = np.array([lead_wT, -Qb1 * Gb1, Qb1 * (1 - Fb1), Qb1 * (1 - Fb1) ** 2,
                         -Qb1 * (1 - Fb1) * Gb1, Gb1**2 * Qb1])
    sol = integrate_terminal(rhs, terminal, grid)
    gab, g21, g22 = _component(sol, 0), _component(sol, 1), _component(sol, 2)
    psi = Path(grid, c - s1 * g21.values, -s1 * g21.derivs)
    # residual of the closed-form psi against its own ODE
    res = (psi.derivs + psi.values * (At - s1 * g22.values) + V - c * At
           + s * s1 * gab.values * g21.values)
    return ReducedGamePaths(game=game, Gamma_ab=gab, Gamma21=g21, Gamma22=g22, psi=psi,
                            K11=_component(sol, 5), K12=_component(sol, 4), K22=_component(sol, 3),
                            psi_residual=float(np.max(np.abs(res))))


def solve_reduced_paths(p: ModelParams, grid: TimeGrid | None = None) -> ReducedPaths:
    """Scalar paths of the reduced system for both game kinds (unit-scale base model)."""
    grid = _check_grid(grid, p.T)
    return ReducedPaths(nash=_solve_reduced_game(p, GameKind.NASH, grid),
                        pareto=_solve_reduced_game(p, GameKind.PARETO, grid))


def path_to_csv(path: Path, fh, name: str = "x") -> None:
    """Write ``t`` and every entry of the path, 17 significant digits."""
    vals = path.values.reshape(path.values.shape[0], -1)
    shape = path.values.shape[1:]
    if len(shape) == 2:
        cols = [f"{name}_{i}{j}" for i in range(shape[0]) for j in range(shape[1])]
    elif len(shape) == 1:
        cols = [f"{name}_{i}" for i in range(shape[0])]
    else:
        cols = [name]
    fh.write(",".join(["t"] + cols) + "\n")
    for t, row in zip(path.times, vals):
        fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")
