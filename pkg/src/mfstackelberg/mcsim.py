"""Euler-Maruyama Monte Carlo for the mean-field system and the finite N-player game."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .cost import GameSolution, solve_follower, solve_game
from .matrixops import InvalidInputError, TimeGrid
from .model import GameKind, ModelParams
from .odesolve import _check_grid

# paths per random stream; a path's noise depends only on (seed, stream, its index)
CHUNK = 1024

_STREAM_INITIAL, _STREAM_LEADERS, _STREAM_FOLLOWERS = 0, 1, 2


class NotEstimableError(ArithmeticError):
    """Raised when a log-log regression has a non-positive point."""


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``common_noise`` makes both games draw the same random numbers, so
    Nash/Pareto differences are estimated with correlated samples.
    ``antithetic`` pairs every draw with its negation (``paths`` must then
    be even).
    """

    paths: int = 10_000
    steps: int = 8000
    seed: int = 0
    antithetic: bool = False
    common_noise: bool = True
    keep_samples: bool = False

    def __post_init__(self):
        if self.paths < 1 or self.steps < 1:
            raise InvalidInputError("paths and steps must be at least 1")
        if self.antithetic and self.paths % 2:
            raise InvalidInputError("antithetic sampling needs an even path count")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class MCReport:
    """Sample mean with its standard error; antithetic pairs count as one sample."""

    mean: float
    stderr: float
    paths: int
    components: dict = field(default_factory=dict)
    samples: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class EmpiricalReport:
    N: int
    sup_dev_sq: MCReport
    eps_nash_gap: MCReport


def _report(samples: np.ndarray, antithetic: bool, keep: bool, components=None) -> MCReport:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if antithetic:
        half = n // 2
        x_eff = 0.5 * (x[:half] + x[half:])
    else:
        x_eff = x
    mean = float(np.mean(x_eff))
    stderr = float(np.std(x_eff, ddof=1) / np.sqrt(x_eff.size)) if x_eff.size > 1 else 0.0
    comps = {} if components is None else {k: float(np.mean(v)) for k, v in components.items()}
    return MCReport(mean=mean, stderr=stderr, paths=n, components=comps, samples=x if keep else None)


class _Streams:
    """Philox generators for a batch of consecutive chunks.

    Each chunk of ``CHUNK`` paths owns one generator per stream, so the
    draws of a complete chunk depend only on the seed, the stream and the
    chunk index, not on the total path count.  Antithetic chunks draw half
    and append the negation.
    """

    def __init__(self, cfg: SimConfig, game_key: int, chunks: list):
        self.sizes = [size for _, size in chunks]
        self.size = sum(self.sizes)
        self.anti = cfg.antithetic
        self.gens = [[np.random.Generator(np.random.Philox(
            np.random.SeedSequence(cfg.seed, spawn_key=(game_key, s, ci))))
            for s in (_STREAM_INITIAL, _STREAM_LEADERS, _STREAM_FOLLOWERS)] for ci, _ in chunks]

    def normal(self, stream: int, shape: tuple) -> np.ndarray:
        out = []
        for gens, size in zip(self.gens, self.sizes):
            base = size // 2 if self.anti else size
            z = gens[stream].standard_normal((base,) + shape)
            out.append(np.concatenate([z, -z]) if self.anti else z)
        return out[0] if len(out) == 1 else np.concatenate(out)

    def split(self, values: np.ndarray) -> list:
        return np.split(values, np.cumsum(self.sizes)[:-1])


def _chunks(cfg: SimConfig):
    n, i = cfg.paths, 0
    while n > 0:
        size = min(CHUNK, n)
        yield i, size
        n -= size
        i += 1


def _batches(cfg: SimConfig, per_path: int = 1, budget: int = 2_000_000):
    """Group chunks so one batch holds about ``budget`` follower states."""
    per_batch = max(1, budget // (CHUNK * per_path))
    chunks = list(_chunks(cfg))
    for i in range(0, len(chunks), per_batch):
        yield chunks[i:i + per_batch]


def _order(cfg: SimConfig, per_chunk: list) -> np.ndarray:
    # regroup so that antithetic partners sit at k and k + paths/2
    if not cfg.antithetic:
        return np.concatenate(per_chunk)
    firsts = [c[: c.size // 2] for c in per_chunk]
    seconds = [c[c.size // 2:] for c in per_chunk]
    return np.concatenate(firsts + seconds)


def _game_key(cfg: SimConfig, game: GameKind) -> int:
    if cfg.common_noise:
        return 0
    return 1 if game is GameKind.NASH else 2


@dataclass(frozen=True)
class _Tables:
    """Feedback coefficients at the simulation nodes."""

    times: np.ndarray
    Phi: np.ndarray  # closed-loop drift of the stacked state
    c: np.ndarray  # affine drift
    Gz: np.ndarray  # rows of Gamma giving the mean-field co-state
    gz: np.ndarray
    Gamma0: np.ndarray
    P_lead: np.ndarray  # rows of Gamma giving both leader co-states
    g_lead: np.ndarray


def _tables(sol: GameSolution, steps: int) -> _Tables:
    sys, paths = sol.paths.system, sol.paths
    lay = sys.layout
    times = np.linspace(0.0, sys.T, steps + 1)
    G = np.stack([paths.Gamma.at(t) for t in times])
    g = np.stack([paths.g.at(t) for t in times])
    G0 = np.stack([paths.Gamma0.at(t) for t in times])
    zs = lay.slice(2)
    lead = slice(0, lay.offsets[2])
    Phi = sys.A[None] - np.einsum("ij,njk->nik", sys.B, G)
    c = -g @ sys.B.T
    return _Tables(times=times, Phi=Phi, c=c, Gz=G[:, zs, :], gz=g[:, zs], Gamma0=G0,
                   P_lead=G[:, lead, :], g_lead=g[:, lead])


def _leader_noise_matrix(p: ModelParams) -> np.ndarray:
    da, db = p.sigma_alpha.shape[1], p.sigma_beta.shape[1]
    na, nb = p.A_alpha.shape[0], p.B_beta.shape[0]
    S = np.zeros((na + nb, da + db))
    S[:na, :da] = p.sigma_alpha
    S[na:, da:] = p.sigma_beta
    return S


def _initial_states(p: ModelParams, sys, streams: _Streams, followers: int | None):
    """Initial stacked states and follower states for one chunk."""
    lay = sys.layout
    n1 = lay.sizes[2]
    na, nb = lay.sizes[0], lay.sizes[1]
    X = np.tile(sys.x0_mean, (streams.size, 1))
    cov_lead = sys.x0_cov[: na + nb, : na + nb]
    zl = streams.normal(_STREAM_INITIAL, (na + nb,))
    X[:, : na + nb] += zl @ _cov_factor(cov_lead).T
    shape = (n1,) if followers is None else (followers, n1)
    z1 = streams.normal(_STREAM_INITIAL, shape)
    x1 = p.mean_eta_1 + z1 @ _cov_factor(p.cov_eta_1).T
    return X, x1


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    """Square root factor ``L`` with ``L L^T = cov`` for a PSD covariance."""
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def _follower_gain(p: ModelParams) -> np.ndarray:
    return np.linalg.solve(p.R_1, p.E_1.T)


def _running_cost(p, dev, u):
    return np.einsum("...i,ij,...j->...", dev, p.Q_1, dev) + np.einsum("...i,ij,...j->...", u, p.R_1, u)


def _terminal_cost(p, dev):
    return np.einsum("...i,ij,...j->...", dev, p.Qbar_1, dev)


def _simulate_chunk(p: ModelParams, sol: GameSolution, tab: _Tables, streams: _Streams):
    """Mean-field system plus one representative follower per path; returns per-path cost parts."""
    sys = sol.paths.system
    lay = sys.layout
    sa, sb, sz = lay.slice(0), lay.slice(1), lay.slice(2)
    K1 = _follower_gain(p)
    Sig_lead = _leader_noise_matrix(p)
    nl = Sig_lead.shape[0]
    d1 = p.sigma_1.shape[1]
    X, x1 = _initial_states(p, sys, streams, None)
    steps = tab.times.size - 1
    dt = sys.T / steps
    sq = np.sqrt(dt)
    state_cost = np.zeros(streams.size)
    control_cost = np.zeros(streams.size)

    def evaluate(n, X, x1):
        z = X[:, sz]
        zeta = X @ tab.Gz[n].T + tab.gz[n]
        u1 = -((x1 - z) @ tab.Gamma0[n].T + zeta) @ K1.T
        dev = x1 - z @ p.F_1.T - X[:, sa] @ p.G_1.T - X[:, sb] @ p.H_1.T - p.M_1
        return u1, np.einsum("ki,ij,kj->k", dev, p.Q_1, dev), np.einsum("ki,ij,kj->k", u1, p.R_1, u1)

    u1, s_prev, c_prev = evaluate(0, X, x1)
    for n in range(steps):
        z = X[:, sz]
        drift_X = X @ tab.Phi[n].T + tab.c[n]
        drift_1 = (x1 @ p.A_1.T + z @ p.B_1.T + X[:, sa] @ p.C_1.T + X[:, sb] @ p.D_1.T + u1 @ p.E_1.T)
        dW_lead = streams.normal(_STREAM_LEADERS, (Sig_lead.shape[1],)) * sq
        dW_1 = streams.normal(_STREAM_FOLLOWERS, (d1,)) * sq
        X = X + drift_X * dt
        X[:, :nl] += dW_lead @ Sig_lead.T
        x1 = x1 + drift_1 * dt + dW_1 @ p.sigma_1.T
        u1, s_next, c_next = evaluate(n + 1, X, x1)
        state_cost += 0.5 * dt * (s_prev + s_next)
        control_cost += 0.5 * dt * (c_prev + c_next)
        s_prev, c_prev = s_next, c_next
    z = X[:, sz]
    dev = x1 - z @ p.Fbar_1.T - X[:, sa] @ p.Gbar_1.T - X[:, sb] @ p.Hbar_1.T - p.Mbar_1
    terminal = _terminal_cost(p, dev)
    return state_cost, control_cost, terminal


def _solution(p, game, grid, sol):
    if sol is not None:
        return sol
    return solve_game(p, game, _check_grid(grid, p.T))


def simulate_mean_field(p: ModelParams, game, cfg: SimConfig, grid: TimeGrid | None = None,
                        solution: GameSolution | None = None) -> MCReport:
    """Monte Carlo estimate of the follower's cost under the solved optimal feedback.

    Parameters
    ----------
    p : ModelParams
    game : GameKind or str
    cfg : SimConfig
        ``steps`` sets the Euler-Maruyama step; feedback coefficients are
        interpolated from the solved paths on ``grid``.
    grid : TimeGrid, optional
        Grid for the analytic cascade (2000 steps by default).
    solution : GameSolution, optional
        Reuse an already solved cascade.

    Returns
    -------
    MCReport
        ``components`` splits the mean into state, control and terminal cost.
    """
    game = GameKind.parse(game)
    sol = _solution(p, game, grid, solution)
    tab = _tables(sol, cfg.steps)
    parts = {"state": [], "control": [], "terminal": []}
    for batch in _batches(cfg):
        streams = _Streams(cfg, _game_key(cfg, game), batch)
        for name, v in zip(("state", "control", "terminal"), _simulate_chunk(p, sol, tab, streams)):
            parts[name].extend(streams.split(v))
    comps = {k: _order(cfg, v) for k, v in parts.items()}
    total = comps["state"] + comps["control"] + comps["terminal"]
    return _report(total, cfg.antithetic, cfg.keep_samples, comps)


def simulate_pair(p: ModelParams, cfg: SimConfig, grid: TimeGrid | None = None) -> dict:
    """Both games and their difference from one set of draws (when ``cfg.common_noise``).

    Returns a dict with ``nash``, ``pareto`` and ``diff`` reports; ``diff``
    is the per-path difference, whose standard error shows the effect of
    common random numbers.
    """
    grid = _check_grid(grid, p.T)
    follower = solve_follower(p, grid)
    keep = SimConfig(**{**cfg.__dict__, "keep_samples": True})
    rep = {g: simulate_mean_field(p, g, keep, solution=solve_game(p, g, grid, follower=follower))
           for g in (GameKind.NASH, GameKind.PARETO)}
    diff = rep[GameKind.NASH].samples - rep[GameKind.PARETO].samples
    out = {"nash": rep[GameKind.NASH], "pareto": rep[GameKind.PARETO],
           "diff": _report(diff, cfg.antithetic, cfg.keep_samples)}
    if not cfg.keep_samples:
        out["nash"] = _report(rep[GameKind.NASH].samples, cfg.antithetic, False)
        out["pareto"] = _report(rep[GameKind.PARETO].samples, cfg.antithetic, False)
    return out


def _empirical_chunk(p: ModelParams, sol: GameSolution, tab: _Tables, streams: _Streams, N: int):
    """Limit system, N-player system and the N-player system with player 0 deviating.

    Every player applies the control process of the limit system, except
    the deviating player 0, who uses the follower feedback against the
    empirical average of the other followers.
    """
    sys = sol.paths.system
    lay = sys.layout
    sa, sb, sz = lay.slice(0), lay.slice(1), lay.slice(2)
    na, nb = lay.sizes[0], lay.sizes[1]
    K1 = _follower_gain(p)
    Sig_lead = _leader_noise_matrix(p)
    nl = na + nb
    d1 = p.sigma_1.shape[1]
    lead_gain = np.zeros((nl, nl))
    # leader controls enter as -D R^-1 D^T times the leader co-states
    lead_gain[:na, :na] = p.D_alpha @ np.linalg.solve(p.R_alpha, p.D_alpha.T)
    lead_gain[na:, na:] = p.D_beta @ np.linalg.solve(p.R_beta, p.D_beta.T)
    A_lead = np.block([[p.A_alpha, p.B_alpha], [p.A_beta, p.B_beta]])
    C_lead = np.vstack([p.C_alpha, p.C_beta])

    X, x1 = _initial_states(p, sys, streams, N)  # x1: (P, N, n1)
    P = streams.size
    steps = tab.times.size - 1
    dt = sys.T / steps
    sq = np.sqrt(dt)
    Y = [X[:, :nl].copy(), x1.copy()]  # N-player states under the limit controls
    Yd = [X[:, :nl].copy(), x1.copy()]  # same with player 0 deviating
    sup_lead_a = np.zeros(P)
    sup_lead_b = np.zeros(P)
    sup_fol = np.zeros(P)
    J_base = np.zeros(P)
    J_dev = np.zeros(P)

    def controls(n, X, x1):
        z = X[:, sz]
        zeta = X @ tab.Gz[n].T + tab.gz[n]
        u1 = -((x1 - z[:, None, :]) @ tab.Gamma0[n].T + zeta[:, None, :]) @ K1.T
        v_lead = -(X @ tab.P_lead[n].T + tab.g_lead[n]) @ lead_gain.T
        return z, zeta, u1, v_lead

    def others_mean(y1):
        return (y1.sum(axis=1) - y1[:, 0]) / (N - 1)

    def player0_cost(lead, y1, u0, bar=False):
        ybar = others_mean(y1)
        ya, yb = lead[:, :na], lead[:, na:]
        if bar:
            dev = y1[:, 0] - ybar @ p.Fbar_1.T - ya @ p.Gbar_1.T - yb @ p.Hbar_1.T - p.Mbar_1
            return _terminal_cost(p, dev)
        dev = y1[:, 0] - ybar @ p.F_1.T - ya @ p.G_1.T - yb @ p.H_1.T - p.M_1
        return _running_cost(p, dev, u0)

    def deviation_control(n, lead, y1, zeta):
        return -((y1[:, 0] - others_mean(y1)) @ tab.Gamma0[n].T + zeta) @ K1.T

    def track(X, x1, Y):
        da = X[:, sa] - Y[0][:, :na]
        db = X[:, sb] - Y[0][:, na:]
        dfol = ((x1 - Y[1]) ** 2).sum(axis=2).max(axis=1)
        return (da**2).sum(axis=1), (db**2).sum(axis=1), dfol

    z, zeta, u1, v = controls(0, X, x1)
    u0_dev = deviation_control(0, *Yd, zeta)
    cb_prev = player0_cost(Y[0], Y[1], u1[:, 0])
    cd_prev = player0_cost(Yd[0], Yd[1], u0_dev)
    for n in range(steps):
        dW_lead = streams.normal(_STREAM_LEADERS, (Sig_lead.shape[1],)) * sq @ Sig_lead.T
        dW_1 = streams.normal(_STREAM_FOLLOWERS, (N, d1)) * sq @ p.sigma_1.T

        # limit system
        dX = X @ tab.Phi[n].T + tab.c[n]
        dx1 = (x1 @ p.A_1.T + (z @ p.B_1.T + X[:, sa] @ p.C_1.T + X[:, sb] @ p.D_1.T)[:, None, :]
               + u1 @ p.E_1.T)

        def n_player(state, u_fol):
            lead, y1 = state
            ybar_all = y1.mean(axis=1)
            ybar_minus = (y1.sum(axis=1, keepdims=True) - y1) / (N - 1)
            d_lead = lead @ A_lead.T + ybar_all @ C_lead.T + v
            d_y1 = (y1 @ p.A_1.T + ybar_minus @ p.B_1.T
                    + (lead[:, :na] @ p.C_1.T + lead[:, na:] @ p.D_1.T)[:, None, :] + u_fol @ p.E_1.T)
            return [lead + d_lead * dt + dW_lead, y1 + d_y1 * dt + dW_1]

        u_dev_all = u1.copy()
        u_dev_all[:, 0] = u0_dev
        Y = n_player(Y, u1)
        Yd = n_player(Yd, u_dev_all)
        X = X + dX * dt
        X[:, :nl] += dW_lead
        x1 = x1 + dx1 * dt + dW_1

        z, zeta, u1, v = controls(n + 1, X, x1)
        u0_dev = deviation_control(n + 1, *Yd, zeta)
        cb = player0_cost(Y[0], Y[1], u1[:, 0])
        cd = player0_cost(Yd[0], Yd[1], u0_dev)
        J_base += 0.5 * dt * (cb_prev + cb)
        J_dev += 0.5 * dt * (cd_prev + cd)
        cb_prev, cd_prev = cb, cd
        a, b, f = track(X, x1, Y)
        np.maximum(sup_lead_a, a, out=sup_lead_a)
        np.maximum(sup_lead_b, b, out=sup_lead_b)
        np.maximum(sup_fol, f, out=sup_fol)

    J_base += player0_cost(Y[0], Y[1], None, bar=True)
    J_dev += player0_cost(Yd[0], Yd[1], None, bar=True)
    return sup_lead_a + sup_lead_b + sup_fol, J_dev - J_base


def simulate_empirical(p: ModelParams, game, N: int, cfg: SimConfig, grid: TimeGrid | None = None,
                       solution: GameSolution | None = None) -> EmpiricalReport:
    """N-player simulation against the mean-field limit, driven by the same noise.

    ``sup_dev_sq`` estimates the expected supremum over time (on the
    simulation grid) of the squared leader deviations plus the largest
    squared follower deviation.  ``eps_nash_gap`` is the change in player
    one's empirical cost when it switches to feedback on the observed
    average of the other followers while everybody else keeps their
    control; a clearly negative value would be a profitable deviation.

    Raises
    ------
    InvalidInputError
        If ``N < 2``.
    """
    if N < 2:
        raise InvalidInputError("the empirical game needs at least two followers")
    game = GameKind.parse(game)
    sol = _solution(p, game, grid, solution)
    tab = _tables(sol, cfg.steps)
    devs, gaps = [], []
    for batch in _batches(cfg, per_path=3 * N):
        # the stream key includes N so different population sizes use fresh draws
        streams = _Streams(cfg, _game_key(cfg, game) + 16 * N, batch)
        d, g = _empirical_chunk(p, sol, tab, streams, N)
        devs.extend(streams.split(d))
        gaps.extend(streams.split(g))
    keep = cfg.keep_samples
    return EmpiricalReport(N=N, sup_dev_sq=_report(_order(cfg, devs), cfg.antithetic, keep),
                           eps_nash_gap=_report(_order(cfg, gaps), cfg.antithetic, keep))


@dataclass(frozen=True)
class ConvergenceResult:
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    reports: tuple


def convergence_study(p: ModelParams, game, N_list, cfg: SimConfig,
                      grid: TimeGrid | None = None) -> ConvergenceResult:
    """Least-squares slope of ``log E[sup deviation^2]`` against ``log N``.

    Raises
    ------
    InvalidInputError
        If fewer than three population sizes are given.
    NotEstimableError
        If any estimated deviation is zero up to rounding.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 3:
        raise InvalidInputError("need at least three population sizes")
    game = GameKind.parse(game)
    sol = _solution(p, game, grid, None)
    reports = tuple(simulate_empirical(p, game, N, cfg, solution=sol) for N in N_list)
    y = np.array([r.sup_dev_sq.mean for r in reports])
    # deviations at rounding level count as zero
    scale = 1.0 + float(np.max(np.abs(sol.paths.system.x0_mean)))
    tiny = (1e3 * np.finfo(float).eps * scale) ** 2
    if np.any(y <= tiny):
        raise NotEstimableError("zero deviation: the convergence rate is not estimable")
    fit = scipy.stats.linregress(np.log(N_list), np.log(y))
    return ConvergenceResult(slope=float(fit.slope), intercept=float(fit.intercept),
                             r2=float(fit.rvalue**2), slope_stderr=float(fit.stderr), reports=reports)
